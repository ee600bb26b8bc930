//! Minimizers over a flat parameter vector.
//!
//! [`minimize`] drives either L-BFGS (two-loop recursion with a strong-Wolfe
//! line search) or SGD with momentum for a fixed number of outer
//! iterations. The objective may change between iterations: before each
//! iteration [`Objective::begin_iteration`] is called, and if it reports a
//! change the current point is re-evaluated before stepping.

mod lbfgs;
mod line_search;
mod sgd;

use std::fmt;
use std::str::FromStr;

pub use lbfgs::{lbfgs_direction, LbfgsState};
pub use line_search::{wolfe_line_search, LineSearchParams, LineSearchResult};
pub use sgd::{sgd_step, SgdState};

use crate::error::{Error, Result};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Loss and gradient at one point. `parts` optionally carries the content
/// and style components of the loss for logging.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub parts: Option<(f64, f64)>,
}

pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation>;

    /// Called before iteration `k` evaluates anything. Returns `true` if the
    /// objective changed, which invalidates any cached evaluation.
    fn begin_iteration(&mut self, _k: usize) -> bool {
        false
    }
}

/// Adapts a stationary `x ↦ (loss, grad)` closure.
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn evaluate(&mut self, x: &[f64]) -> Result<Evaluation> {
        let (loss, grad) = (self.0)(x);
        if grad.len() != x.len() {
            return Err(Error::mismatch("objective", &[x.len()], &[grad.len()]));
        }
        Ok(Evaluation {
            loss,
            grad,
            parts: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Method {
    #[default]
    Lbfgs,
    Sgd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Lbfgs => "lbfgs",
            Method::Sgd => "sgd",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lbfgs" => Ok(Method::Lbfgs),
            "sgd" => Ok(Method::Sgd),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    pub method: Method,
    pub iterations: usize,
    pub history_size: usize,
    pub line_search: LineSearchParams,
    /// Clear the L-BFGS history every this many iterations.
    pub reset_history_every: Option<usize>,
    pub sgd_lr: f64,
    pub sgd_momentum: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            method: Method::Lbfgs,
            iterations: 1000,
            history_size: 10,
            line_search: LineSearchParams::default(),
            reset_history_every: None,
            sgd_lr: 1.0,
            sgd_momentum: 0.9,
        }
    }
}

/// One outer iteration. `loss`, the parts and `grad_norm` describe the
/// point the iteration started from; `step` is the accepted line-search
/// step (L-BFGS) or the learning rate (SGD), 0 when no move was made.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub content: Option<f64>,
    pub style: Option<f64>,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Completed,
    /// The line search failed twice in a row (once after a history reset).
    LineSearchFailed { iteration: usize, reason: String },
    /// The objective became non-finite.
    Diverged { iteration: usize },
}

#[derive(Debug, Clone)]
pub struct Minimization {
    pub x: Vec<f64>,
    pub trace: Vec<IterationRecord>,
    /// Evaluation at the returned `x` under the last iteration's objective.
    pub final_eval: Evaluation,
    pub status: Status,
}

fn record(k: usize, e: &Evaluation, step: f64) -> IterationRecord {
    IterationRecord {
        iteration: k,
        loss: e.loss,
        content: e.parts.map(|p| p.0),
        style: e.parts.map(|p| p.1),
        grad_norm: norm(&e.grad),
        step,
    }
}

/// Initial trial step when there is no curvature information yet.
fn cold_start_step(grad: &[f64], params: &LineSearchParams) -> f64 {
    let l1: f64 = grad.iter().map(|g| g.abs()).sum();
    params.initial_step.min(1.0 / l1)
}

/// Runs `opts.iterations` outer iterations of the chosen method from `x0`.
///
/// `observer` sees every trace record as it is produced.
pub fn minimize<O: Objective + ?Sized>(
    obj: &mut O,
    x0: Vec<f64>,
    opts: &MinimizeOptions,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<Minimization> {
    if opts.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    opts.line_search.validate()?;
    if opts.method == Method::Sgd && !(opts.sgd_lr > 0.0 && (0.0..1.0).contains(&opts.sgd_momentum)) {
        return Err(Error::Config(format!(
            "sgd needs lr > 0 and momentum in [0, 1) (got {}, {})",
            opts.sgd_lr, opts.sgd_momentum
        )));
    }
    let mut x = x0;
    let mut trace = Vec::with_capacity(opts.iterations);
    let mut current: Option<Evaluation> = None;
    let mut status = Status::Completed;
    let mut lbfgs = LbfgsState::new(opts.history_size);
    let mut sgd = SgdState::new(opts.sgd_lr, opts.sgd_momentum, x.len());

    for k in 0..opts.iterations {
        let changed = obj.begin_iteration(k);
        let eval = match current.take() {
            Some(e) if !changed => e,
            _ => obj.evaluate(&x)?,
        };
        if eval.grad.len() != x.len() {
            return Err(Error::mismatch("objective", &[x.len()], &[eval.grad.len()]));
        }
        if !eval.loss.is_finite() || !eval.grad.iter().all(|g| g.is_finite()) {
            let r = record(k, &eval, 0.0);
            observer(&r);
            trace.push(r);
            status = Status::Diverged { iteration: k };
            current = Some(eval);
            break;
        }

        match opts.method {
            Method::Sgd => {
                let step = if eval.grad.iter().all(|&g| g == 0.0) && sgd.velocity.iter().all(|&v| v == 0.0) {
                    0.0
                } else {
                    x = sgd_step(&mut sgd, &x, &eval.grad);
                    opts.sgd_lr
                };
                let r = record(k, &eval, step);
                observer(&r);
                trace.push(r);
            }
            Method::Lbfgs => {
                lbfgs.iteration = k;
                if let Some(every) = opts.reset_history_every {
                    if every > 0 && k > 0 && k % every == 0 {
                        lbfgs.clear();
                    }
                }
                if eval.grad.iter().all(|&g| g == 0.0) {
                    let r = record(k, &eval, 0.0);
                    observer(&r);
                    trace.push(r);
                    current = Some(eval);
                    continue;
                }
                let attempt = |state: &LbfgsState, obj: &mut O| {
                    let d = lbfgs_direction(state, &eval.grad);
                    let mut params = opts.line_search;
                    if state.is_empty() {
                        params.initial_step = cold_start_step(&eval.grad, &params);
                    }
                    wolfe_line_search(obj, &x, &d, eval.loss, &eval.grad, &params)
                };
                let outcome = match attempt(&lbfgs, obj) {
                    Err(Error::LineSearch(_)) | Err(Error::Config(_)) => {
                        lbfgs.clear();
                        attempt(&lbfgs, obj)
                    }
                    other => other,
                };
                match outcome {
                    Ok(ls) => {
                        let s = ls.x.iter().zip(&x).map(|(a, b)| a - b).collect();
                        let y = ls.eval.grad.iter().zip(&eval.grad).map(|(a, b)| a - b).collect();
                        lbfgs.push(s, y);
                        let r = record(k, &eval, ls.step);
                        observer(&r);
                        trace.push(r);
                        x = ls.x;
                        current = Some(ls.eval);
                    }
                    Err(Error::LineSearch(reason)) | Err(Error::Config(reason)) => {
                        let r = record(k, &eval, 0.0);
                        observer(&r);
                        trace.push(r);
                        status = Status::LineSearchFailed { iteration: k, reason };
                        current = Some(eval);
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    let final_eval = match current {
        Some(e) => e,
        None => obj.evaluate(&x)?,
    };
    Ok(Minimization {
        x,
        trace,
        final_eval,
        status,
    })
}
