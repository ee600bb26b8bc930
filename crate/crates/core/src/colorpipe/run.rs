use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{InitMode, LayerPlan, RunConfig};
use super::image_io::{deprocess, preprocess, resize_buffer, save_png, ImageBuffer, Provenance};
use super::schedule::StyleWeightSchedule;
use crate::convnet::{backprop_to_input, load_weights, FeatureSet, Network, NetworkTopology, Tape};
use crate::error::{Error, Result};
use crate::optim::{minimize, Evaluation, MinimizeOptions, Objective, Status};
use crate::styleloss::{gram, total_loss_grad, FeatureMatrix, LossTargets, LossWeights};
use crate::tensor::Tensor;

pub const NOISE_STD: f64 = 30.0;

/// Starting canvas: seeded Gaussian noise (σ = 30 in preprocessed units)
/// or a copy of the content image.
pub fn initialize_canvas(config: &RunConfig, content: &ImageBuffer) -> ImageBuffer {
    let pixels = match config.init {
        InitMode::Content => content.pixels.clone(),
        InitMode::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let normal = Normal::new(0.0, NOISE_STD).expect("positive std");
            let data = (0..content.pixels.len()).map(|_| normal.sample(&mut rng)).collect();
            Tensor::from_vec(content.pixels.shape(), data).expect("same shape")
        }
    };
    ImageBuffer {
        pixels,
        original_dims: content.original_dims,
        provenance: Provenance::Canvas,
    }
}

/// Content features and style Grams, computed once per run. The style
/// image is resampled to the content image's size first.
pub fn prepare_targets(
    content: &ImageBuffer,
    style: &ImageBuffer,
    network: &Network,
    plan: &LayerPlan,
) -> Result<LossTargets> {
    let (features, _) = network.forward_collect(&content.pixels, &[plan.content_layer.as_str()])?;
    let content_target = FeatureMatrix::from_feature_map(
        features
            .get(&plan.content_layer)
            .ok_or_else(|| Error::Capture(plan.content_layer.clone()))?,
    )?;

    let style = resize_buffer(style, content.width(), content.height());
    let names: Vec<&str> = plan.style_layers.iter().map(|(n, _)| n.as_str()).collect();
    let (features, _) = network.forward_collect(&style.pixels, &names)?;
    let mut style_targets = BTreeMap::new();
    for name in names {
        let f = FeatureMatrix::from_feature_map(features.get(name).ok_or_else(|| Error::Capture(name.into()))?)?;
        style_targets.insert(name.to_string(), gram(&f));
    }
    Ok(LossTargets {
        content_layer: plan.content_layer.clone(),
        content_target,
        style_targets,
    })
}

struct Forward<'n> {
    x: Vec<f64>,
    features: FeatureSet,
    tape: Tape<'n>,
}

/// Total loss over canvas pixels, with β following a decay schedule.
///
/// The last forward pass is kept, so re-evaluating the same pixels after a
/// β change only costs a backward pass.
pub struct ColorObjective<'a> {
    network: &'a Network,
    targets: &'a LossTargets,
    weights: LossWeights,
    schedule: StyleWeightSchedule,
    shape: Vec<usize>,
    capture: Vec<String>,
    cache: Option<Forward<'a>>,
}

impl<'a> ColorObjective<'a> {
    pub fn new(
        network: &'a Network,
        targets: &'a LossTargets,
        weights: LossWeights,
        schedule: StyleWeightSchedule,
        shape: &[usize],
    ) -> Self {
        let capture = targets.layers().into_iter().map(str::to_string).collect();
        let weights = weights.with_beta(schedule.beta(0));
        Self {
            network,
            targets,
            weights,
            schedule,
            shape: shape.to_vec(),
            capture,
            cache: None,
        }
    }

    pub fn beta(&self) -> f64 {
        self.weights.beta
    }
}

impl Objective for ColorObjective<'_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation> {
        if self.cache.as_ref().is_none_or(|c| c.x != x) {
            self.cache = None;
            let pixels = Tensor::from_vec(&self.shape, x.to_vec())?;
            let names: Vec<&str> = self.capture.iter().map(String::as_str).collect();
            let (features, tape) = self.network.forward_collect(&pixels, &names)?;
            self.cache = Some(Forward {
                x: x.to_vec(),
                features,
                tape,
            });
        }
        let fwd = self.cache.as_ref().expect("filled above");
        let ev = total_loss_grad(self.targets, &fwd.features, &self.weights)?;
        let grad = backprop_to_input(&fwd.tape, &ev.feature_grads)?;
        Ok(Evaluation {
            loss: ev.loss,
            grad: grad.into_data(),
            parts: Some((ev.content, ev.style)),
        })
    }

    fn begin_iteration(&mut self, k: usize) -> bool {
        let beta = self.schedule.beta(k);
        let changed = beta != self.weights.beta;
        self.weights.beta = beta;
        changed
    }
}

/// One row of the run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub beta: f64,
    pub total: f64,
    pub content: f64,
    pub style: f64,
    pub grad_norm: f64,
    pub step: f64,
}

pub const TRACE_HEADER: &str = "iter,beta,total,content,style,grad_norm,step";

/// Nine significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.8e}")
}

impl TraceRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iter,
            fmt_float(self.beta),
            fmt_float(self.total),
            fmt_float(self.content),
            fmt_float(self.style),
            fmt_float(self.grad_norm),
            fmt_float(self.step)
        )
    }
}

pub fn format_trace(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv());
    }
    s
}

/// Comment line appended to a trace when the run stopped early, `None`
/// for a completed run.
pub fn status_marker(status: &Status) -> Option<String> {
    match status {
        Status::Completed => None,
        Status::LineSearchFailed { iteration, reason } => {
            Some(format!("# stopped: line search failed at iteration {iteration}: {reason}"))
        }
        Status::Diverged { iteration } => Some(format!("# stopped: loss diverged at iteration {iteration}")),
    }
}

/// Writes the trace CSV, ending with a `#` comment line if `status` is not
/// [`Status::Completed`].
pub fn write_trace(path: impl AsRef<Path>, rows: &[TraceRow], status: &Status) -> Result<()> {
    let path = path.as_ref();
    let mut text = format_trace(rows);
    if let Some(marker) = status_marker(status) {
        let _ = writeln!(text, "{marker}");
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output: ImageBuffer,
    pub trace: Vec<TraceRow>,
    pub status: Status,
    /// Total loss at the returned canvas under the final iteration's β.
    pub final_loss: f64,
}

impl RunOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == Status::Completed
    }
}

pub fn minimize_options(config: &RunConfig) -> MinimizeOptions {
    MinimizeOptions {
        method: config.optimizer,
        iterations: config.iterations,
        sgd_lr: config.sgd_lr,
        ..Default::default()
    }
}

/// Optimizes a canvas against precomputed targets; no file I/O.
pub fn colorize(
    config: &RunConfig,
    network: &Network,
    plan: &LayerPlan,
    content: &ImageBuffer,
    targets: &LossTargets,
    mut progress: impl FnMut(&TraceRow),
) -> Result<RunOutcome> {
    config.validate()?;
    let canvas = initialize_canvas(config, content);
    let layer_weights = plan.style_layers.iter().cloned().collect();
    let weights = LossWeights::new(config.alpha, config.beta0, layer_weights)?;
    let schedule = StyleWeightSchedule::new(config.beta0, config.decay_per_iter);
    let mut objective = ColorObjective::new(network, targets, weights, schedule, canvas.pixels.shape());

    let to_row = |r: &crate::optim::IterationRecord| TraceRow {
        iter: r.iteration,
        beta: schedule.beta(r.iteration),
        total: r.loss,
        content: r.content.unwrap_or(f64::NAN),
        style: r.style.unwrap_or(f64::NAN),
        grad_norm: r.grad_norm,
        step: r.step,
    };
    let result = minimize(
        &mut objective,
        canvas.pixels.clone().into_data(),
        &minimize_options(config),
        |r| progress(&to_row(r)),
    )?;
    let trace = result.trace.iter().map(to_row).collect();
    Ok(RunOutcome {
        output: ImageBuffer {
            pixels: Tensor::from_vec(canvas.pixels.shape(), result.x)?,
            ..canvas
        },
        trace,
        status: result.status,
        final_loss: result.final_eval.loss,
    })
}

/// Loads the content (as grayscale) and style images named in `config`.
pub fn load_inputs(config: &RunConfig) -> Result<(ImageBuffer, ImageBuffer)> {
    let content = preprocess(&config.content_path, config.max_side, true, Provenance::Content)?;
    let style = preprocess(&config.style_path, config.max_side, false, Provenance::Style)?;
    Ok((content, style))
}

/// Writes the output PNG and the trace CSV next to it.
pub fn write_outputs(config: &RunConfig, outcome: &RunOutcome) -> Result<()> {
    save_png(&deprocess(&outcome.output), &config.output_path)?;
    write_trace(config.trace_path(), &outcome.trace, &outcome.status)
}

/// Full pipeline on an already constructed network.
///
/// The output image and trace are written even when the optimizer stops
/// early; check [`RunOutcome::status`].
pub fn run_with_network(
    config: &RunConfig,
    network: &Network,
    plan: &LayerPlan,
    progress: impl FnMut(&TraceRow),
) -> Result<RunOutcome> {
    config.validate()?;
    let (content, style) = load_inputs(config)?;
    let targets = prepare_targets(&content, &style, network, plan)?;
    let outcome = colorize(config, network, plan, &content, &targets, progress)?;
    write_outputs(config, &outcome)?;
    Ok(outcome)
}

/// Loads the VGG-19 trunk named by `config.weights_path`.
pub fn load_vgg19(config: &RunConfig) -> Result<Network> {
    let path = config
        .weights_path
        .as_ref()
        .ok_or_else(|| Error::Config("no weight file given".into()))?;
    let topology = NetworkTopology::vgg19(config.pooling);
    let weights = load_weights(path, &topology)?;
    Network::new(topology, weights)
}

/// Colorizes `config.content_path` with the style of `config.style_path`
/// using pretrained VGG-19 weights and the default layer plan.
pub fn run_colorization(config: &RunConfig, progress: impl FnMut(&TraceRow)) -> Result<RunOutcome> {
    config.validate()?;
    let network = load_vgg19(config)?;
    run_with_network(config, &network, &LayerPlan::default(), progress)
}
