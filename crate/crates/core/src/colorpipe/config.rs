use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::convnet::PoolMode;
use crate::error::{Error, Result};
use crate::optim::Method;

pub const DEFAULT_CONTENT_LAYER: &str = "conv4_2";
pub const DEFAULT_STYLE_LAYERS: [&str; 5] = ["conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMode {
    #[default]
    Noise,
    Content,
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Noise => "noise",
            InitMode::Content => "content",
        })
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(InitMode::Noise),
            "content" => Ok(InitMode::Content),
            other => Err(Error::Config(format!("unknown init mode `{other}`"))),
        }
    }
}

/// Which captured layers feed the loss, and the style layer weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPlan {
    pub content_layer: String,
    pub style_layers: Vec<(String, f64)>,
}

impl Default for LayerPlan {
    /// `conv4_2` for content; `conv1_1` … `conv5_1` for style at 1/5 each.
    fn default() -> Self {
        Self::uniform(DEFAULT_CONTENT_LAYER, &DEFAULT_STYLE_LAYERS)
    }
}

impl LayerPlan {
    pub fn uniform(content_layer: &str, style_layers: &[&str]) -> Self {
        let w = 1.0 / style_layers.len() as f64;
        Self {
            content_layer: content_layer.to_string(),
            style_layers: style_layers.iter().map(|s| (s.to_string(), w)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub content_path: PathBuf,
    pub style_path: PathBuf,
    pub output_path: PathBuf,
    pub weights_path: Option<PathBuf>,
    pub iterations: usize,
    pub alpha: f64,
    pub beta0: f64,
    pub decay_per_iter: f64,
    pub optimizer: Method,
    pub pooling: PoolMode,
    pub init: InitMode,
    pub seed: u64,
    pub max_side: u32,
    pub sgd_lr: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            content_path: PathBuf::new(),
            style_path: PathBuf::new(),
            output_path: PathBuf::new(),
            weights_path: None,
            iterations: 1000,
            alpha: 1.0,
            beta0: 1e3,
            decay_per_iter: 0.0025,
            optimizer: Method::Lbfgs,
            pooling: PoolMode::Avg,
            init: InitMode::Noise,
            seed: 0,
            max_side: 512,
            sgd_lr: 1.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.decay_per_iter) {
            return Err(Error::Config(format!(
                "decay per iteration must lie in [0, 1) (got {})",
                self.decay_per_iter
            )));
        }
        if self.max_side < 32 {
            return Err(Error::Config(format!("max side must be at least 32 (got {})", self.max_side)));
        }
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.alpha) || !ok(self.beta0) || self.alpha + self.beta0 <= 0.0 {
            return Err(Error::Config(format!(
                "need alpha, beta >= 0 with alpha + beta > 0 (got {}, {})",
                self.alpha, self.beta0
            )));
        }
        if !(self.sgd_lr > 0.0 && self.sgd_lr.is_finite()) {
            return Err(Error::Config(format!("sgd learning rate must be positive (got {})", self.sgd_lr)));
        }
        Ok(())
    }

    /// Trace CSV path: the output path with its extension replaced by
    /// `trace.csv`.
    pub fn trace_path(&self) -> PathBuf {
        self.output_path.with_extension("trace.csv")
    }
}

/// Multi-line summary of every setting a run uses.
pub fn run_header(config: &RunConfig, plan: &LayerPlan) -> String {
    let style = plan
        .style_layers
        .iter()
        .map(|(n, w)| format!("{n}:{w}"))
        .collect::<Vec<_>>()
        .join(",");
    let weights = config
        .weights_path
        .as_ref()
        .map_or_else(|| "-".to_string(), |p| p.display().to_string());
    format!(
        "content_path = {}\nstyle_path = {}\noutput_path = {}\nweights_path = {weights}\n\
         iterations = {}\nalpha = {}\nbeta0 = {}\ndecay_per_iter = {}\noptimizer = {}\n\
         pooling = {}\ninit = {}\nseed = {}\nmax_side = {}\nsgd_lr = {}\n\
         content_layer = {}\nstyle_layers = {style}\n",
        config.content_path.display(),
        config.style_path.display(),
        config.output_path.display(),
        config.iterations,
        config.alpha,
        config.beta0,
        config.decay_per_iter,
        config.optimizer,
        config.pooling,
        config.init,
        config.seed,
        config.max_side,
        config.sgd_lr,
        plan.content_layer,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.iterations, 1000);
        assert_eq!(c.decay_per_iter, 0.0025);
        assert_eq!(c.optimizer, Method::Lbfgs);
        assert_eq!(c.beta0, 1e3 * c.alpha);
        let p = LayerPlan::default();
        assert_eq!(p.content_layer, "conv4_2");
        assert_eq!(p.style_layers.len(), 5);
        assert!(p.style_layers.iter().all(|(_, w)| *w == 0.2));
    }

    #[test]
    fn validation() {
        let ok = RunConfig::default();
        ok.validate().unwrap();
        for bad in [
            RunConfig { iterations: 0, ..ok.clone() },
            RunConfig { decay_per_iter: 1.0, ..ok.clone() },
            RunConfig { decay_per_iter: -0.1, ..ok.clone() },
            RunConfig { max_side: 31, ..ok.clone() },
            RunConfig { alpha: 0.0, beta0: 0.0, ..ok.clone() },
            RunConfig { sgd_lr: 0.0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn trace_next_to_output() {
        let c = RunConfig {
            output_path: "out/o.png".into(),
            ..Default::default()
        };
        assert_eq!(c.trace_path(), PathBuf::from("out/o.trace.csv"));
    }
}
