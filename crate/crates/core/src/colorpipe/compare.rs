//! The 2×2 optimizer comparison: {SGD, L-BFGS} × {fixed, decaying} style
//! weight, sharing one seed and one set of targets.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use super::config::{LayerPlan, RunConfig};
use super::image_io::{deprocess, save_png};
use super::run::{colorize, load_inputs, prepare_targets, status_marker, RunOutcome, TRACE_HEADER};
use crate::convnet::Network;
use crate::error::{Error, Result};
use crate::optim::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Panel {
    pub label: char,
    pub method: Method,
    pub decaying: bool,
}

pub const PANELS: [Panel; 4] = [
    Panel { label: 'a', method: Method::Sgd, decaying: false },
    Panel { label: 'b', method: Method::Sgd, decaying: true },
    Panel { label: 'c', method: Method::Lbfgs, decaying: false },
    Panel { label: 'd', method: Method::Lbfgs, decaying: true },
];

impl Panel {
    /// `base` with this panel's optimizer and decay applied. Decaying
    /// panels keep `base.decay_per_iter`.
    pub fn config(&self, base: &RunConfig) -> RunConfig {
        RunConfig {
            optimizer: self.method,
            decay_per_iter: if self.decaying { base.decay_per_iter } else { 0.0 },
            ..base.clone()
        }
    }
}

/// Five learning rates spaced by decades around `center`.
pub fn default_lr_grid(center: f64) -> Vec<f64> {
    [1e-2, 1e-1, 1.0, 1e1, 1e2].iter().map(|s| s * center).collect()
}

#[derive(Debug, Clone)]
pub struct PanelResult {
    pub panel: Panel,
    /// Learning rate of the selected SGD run.
    pub sgd_lr: Option<f64>,
    pub outcome: std::result::Result<RunOutcome, String>,
    /// Every SGD learning rate tried with its final loss (NaN on failure).
    pub sweep: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub panels: Vec<PanelResult>,
}

impl CompareOutcome {
    pub fn panel(&self, label: char) -> Option<&PanelResult> {
        self.panels.iter().find(|p| p.panel.label == label)
    }

    pub fn final_loss(&self, label: char) -> Option<f64> {
        self.panel(label)?.outcome.as_ref().ok().map(|o| o.final_loss)
    }
}

fn usable(o: &RunOutcome) -> bool {
    o.succeeded() && o.final_loss.is_finite()
}

/// Runs the four panels. SGD panels sweep `lr_grid` (or just
/// `config.sgd_lr` when empty) and keep the run with the lowest final
/// loss. A failing run does not stop the others.
pub fn compare_optimizers(
    config: &RunConfig,
    network: &Network,
    plan: &LayerPlan,
    lr_grid: &[f64],
) -> Result<CompareOutcome> {
    config.validate()?;
    let (content, style) = load_inputs(config)?;
    let targets = prepare_targets(&content, &style, network, plan)?;
    let grid: Vec<f64> = if lr_grid.is_empty() { vec![config.sgd_lr] } else { lr_grid.to_vec() };

    let jobs: Vec<(usize, RunConfig)> = PANELS
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            let base = p.config(config);
            match p.method {
                Method::Sgd => grid
                    .iter()
                    .map(|&lr| (i, RunConfig { sgd_lr: lr, ..base.clone() }))
                    .collect::<Vec<_>>(),
                Method::Lbfgs => vec![(i, base)],
            }
        })
        .collect();
    let results: Vec<(usize, RunConfig, Result<RunOutcome>)> = jobs
        .into_par_iter()
        .map(|(i, cfg)| {
            let r = colorize(&cfg, network, plan, &content, &targets, |_| {});
            (i, cfg, r)
        })
        .collect();

    let panels = PANELS
        .iter()
        .enumerate()
        .map(|(i, &panel)| {
            let runs: Vec<_> = results.iter().filter(|r| r.0 == i).collect();
            let sweep = if panel.method == Method::Sgd {
                runs.iter()
                    .map(|(_, c, r)| {
                        let loss = r.as_ref().ok().filter(|o| usable(o)).map_or(f64::NAN, |o| o.final_loss);
                        (c.sgd_lr, loss)
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let best = runs
                .iter()
                .filter(|(_, _, r)| r.as_ref().is_ok_and(usable))
                .min_by(|a, b| {
                    let la = a.2.as_ref().map(|o| o.final_loss).unwrap_or(f64::INFINITY);
                    let lb = b.2.as_ref().map(|o| o.final_loss).unwrap_or(f64::INFINITY);
                    la.total_cmp(&lb)
                })
                .or(runs.first())
                .expect("every panel has at least one run");
            PanelResult {
                panel,
                sgd_lr: (panel.method == Method::Sgd).then_some(best.1.sgd_lr),
                outcome: best.2.as_ref().map(|o| o.clone()).map_err(|e| e.to_string()),
                sweep,
            }
        })
        .collect();
    Ok(CompareOutcome { panels })
}

/// Image path for a panel: `<stem>_<label>.png` beside `config.output_path`.
pub fn panel_path(config: &RunConfig, label: char) -> PathBuf {
    let stem = config
        .output_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    config.output_path.with_file_name(format!("{stem}_{label}.png"))
}

pub fn compare_trace_path(config: &RunConfig) -> PathBuf {
    config.output_path.with_extension("compare.csv")
}

/// Writes one PNG per successful panel and a combined trace whose rows are
/// prefixed with the panel label. Panels that stopped early or failed get
/// a `#` comment line at the end.
pub fn write_compare_outputs(config: &RunConfig, outcome: &CompareOutcome) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut csv = format!("panel,{TRACE_HEADER}\n");
    for p in &outcome.panels {
        if let Ok(o) = &p.outcome {
            let path = panel_path(config, p.panel.label);
            save_png(&deprocess(&o.output), &path)?;
            written.push(path);
            for row in &o.trace {
                let _ = writeln!(csv, "{},{}", p.panel.label, row.csv());
            }
        }
    }
    for p in &outcome.panels {
        let marker = match &p.outcome {
            Ok(o) => status_marker(&o.status),
            Err(e) => Some(format!("# failed: {e}")),
        };
        if let Some(m) = marker {
            let _ = writeln!(csv, "# panel {}{}", p.panel.label, m.trim_start_matches('#'));
        }
    }
    let trace = compare_trace_path(config);
    fs::write(&trace, csv).map_err(|e| Error::io(&trace, e))?;
    written.push(trace);
    Ok(written)
}
