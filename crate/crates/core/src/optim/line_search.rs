//! Strong-Wolfe line search: bracketing followed by zoom with safeguarded
//! cubic interpolation.

use super::{dot, Evaluation, Objective};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_evals: usize,
    pub initial_step: f64,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            max_evals: 20,
            initial_step: 1.0,
        }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "line search needs 0 < c1 < c2 < 1 (got c1={}, c2={})",
                self.c1, self.c2
            )));
        }
        if self.max_evals == 0 || self.initial_step.is_nan() || self.initial_step <= 0.0 {
            return Err(Error::Config("line search needs max_evals >= 1 and a positive initial step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LineSearchResult {
    pub step: f64,
    pub x: Vec<f64>,
    pub eval: Evaluation,
    pub evals: usize,
    /// False when the budget ran out and the best sufficient-decrease step
    /// was returned instead.
    pub strong_wolfe: bool,
}

#[derive(Clone, Copy)]
struct Point {
    t: f64,
    f: f64,
    dg: f64,
}

/// Minimizer of the cubic through `a` and `b`, or `None` when it is not
/// well defined.
fn cubic_min(a: Point, b: Point) -> Option<f64> {
    let d1 = a.dg + b.dg - 3.0 * (a.f - b.f) / (a.t - b.t);
    let disc = d1 * d1 - a.dg * b.dg;
    if !disc.is_finite() || disc < 0.0 {
        return None;
    }
    let d2 = (b.t - a.t).signum() * disc.sqrt();
    let t = b.t - (b.t - a.t) * (b.dg + d2 - d1) / (b.dg - a.dg + 2.0 * d2);
    t.is_finite().then_some(t)
}

struct Search<'a, O: Objective + ?Sized> {
    obj: &'a mut O,
    x: &'a [f64],
    d: &'a [f64],
    f0: f64,
    dg0: f64,
    params: LineSearchParams,
    /// Differences in f below this are roundoff.
    noise: f64,
    evals: usize,
    best: Option<(f64, Vec<f64>, Evaluation)>,
}

/// Relative size of objective differences treated as roundoff.
const F_NOISE: f64 = 1e-12;

/// Accepted steps whose slope still exceeds this fraction of the initial
/// slope get one interpolation refinement.
const REFINE_SLOPE: f64 = 0.1;

impl<O: Objective + ?Sized> Search<'_, O> {
    /// Sufficient decrease. Once f(t) is indistinguishable from f0 the
    /// value test is meaningless, so the slope test φ'(t) ≤ (1 − 2c1)|φ'(0)|
    /// stands in for it.
    fn armijo(&self, p: &Point) -> bool {
        p.f <= self.f0 + self.params.c1 * p.t * self.dg0
            || ((p.f - self.f0).abs() <= self.noise && p.dg <= (2.0 * self.params.c1 - 1.0) * self.dg0)
    }

    fn worse(&self, p: &Point, than: &Point) -> bool {
        p.f >= than.f + self.noise
    }

    fn curvature(&self, dg: f64) -> bool {
        dg.abs() <= -self.params.c2 * self.dg0
    }

    fn eval(&mut self, t: f64) -> Result<(Point, Vec<f64>, Evaluation)> {
        self.evals += 1;
        let xt: Vec<f64> = self.x.iter().zip(self.d).map(|(xi, di)| t.mul_add(*di, *xi)).collect();
        let e = self.obj.evaluate(&xt)?;
        let f = if e.loss.is_finite() { e.loss } else { f64::INFINITY };
        let dg = dot(&e.grad, self.d);
        let p = Point { t, f, dg };
        if f.is_finite() && self.armijo(&p) && self.best.as_ref().is_none_or(|b| f < b.2.loss) {
            self.best = Some((t, xt.clone(), e.clone()));
        }
        Ok((p, xt, e))
    }

    fn done(t: f64, x: Vec<f64>, eval: Evaluation, evals: usize) -> LineSearchResult {
        LineSearchResult {
            step: t,
            x,
            eval,
            evals,
            strong_wolfe: true,
        }
    }

    /// Called with an acceptable point `p`. If the slope there is still
    /// far from zero, spends one evaluation on the minimizer of the cubic
    /// through the origin and `p` and keeps whichever point is lower.
    fn refine(mut self, p: Point, x: Vec<f64>, e: Evaluation) -> Result<LineSearchResult> {
        let origin = Point { t: 0.0, f: self.f0, dg: self.dg0 };
        let candidate = (p.dg.abs() > REFINE_SLOPE * self.dg0.abs() && self.evals < self.params.max_evals)
            .then(|| cubic_min(origin, p))
            .flatten()
            .filter(|&t| t > 0.0 && t < 10.0 * p.t && (t - p.t).abs() > 1e-3 * p.t);
        if let Some(t) = candidate {
            let (q, xq, eq) = self.eval(t)?;
            if self.armijo(&q) && self.curvature(q.dg) && q.f < p.f {
                return Ok(Self::done(t, xq, eq, self.evals));
            }
        }
        Ok(Self::done(p.t, x, e, self.evals))
    }

    fn fallback(self) -> Result<LineSearchResult> {
        let evals = self.evals;
        match self.best {
            Some((step, x, eval)) => Ok(LineSearchResult {
                step,
                x,
                eval,
                evals,
                strong_wolfe: false,
            }),
            None => Err(Error::LineSearch(format!(
                "no sufficient decrease within {evals} evaluations"
            ))),
        }
    }

    fn zoom(mut self, mut lo: Point, mut hi: Point) -> Result<LineSearchResult> {
        while self.evals < self.params.max_evals {
            let width = hi.t - lo.t;
            let (a, b) = (lo.t.min(hi.t), lo.t.max(hi.t));
            let margin = 0.1 * (b - a);
            let t = match (lo.f.is_finite() && hi.f.is_finite())
                .then(|| cubic_min(lo, hi))
                .flatten()
            {
                Some(t) if t > a + margin && t < b - margin => t,
                _ => lo.t + 0.5 * width,
            };
            if t == lo.t || t == hi.t {
                break;
            }
            let (p, xt, e) = self.eval(t)?;
            if !self.armijo(&p) || self.worse(&p, &lo) {
                hi = p;
            } else {
                if self.curvature(p.dg) {
                    return self.refine(p, xt, e);
                }
                if p.dg * (hi.t - lo.t) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
        self.fallback()
    }
}

/// Finds a step along `d` from `x` satisfying the strong Wolfe conditions.
///
/// `f0` and `g0` are the objective value and gradient at `x`; `g0·d` must
/// be negative. If the evaluation budget runs out, the lowest step seen
/// that satisfies sufficient decrease is returned with
/// `strong_wolfe == false`.
pub fn wolfe_line_search<O: Objective + ?Sized>(
    obj: &mut O,
    x: &[f64],
    d: &[f64],
    f0: f64,
    g0: &[f64],
    params: &LineSearchParams,
) -> Result<LineSearchResult> {
    params.validate()?;
    let dg0 = dot(g0, d);
    if dg0.is_nan() || dg0 >= 0.0 {
        return Err(Error::Config(format!(
            "line search direction is not a descent direction (g·d = {dg0})"
        )));
    }
    let mut s = Search {
        obj,
        x,
        d,
        f0,
        dg0,
        params: *params,
        noise: F_NOISE * f0.abs(),
        evals: 0,
        best: None,
    };
    let mut prev = Point { t: 0.0, f: f0, dg: dg0 };
    let mut t = params.initial_step;
    while s.evals < params.max_evals {
        let (p, xt, e) = s.eval(t)?;
        if !s.armijo(&p) || (s.evals > 1 && s.worse(&p, &prev)) {
            return s.zoom(prev, p);
        }
        if s.curvature(p.dg) {
            return s.refine(p, xt, e);
        }
        if p.dg >= 0.0 {
            return s.zoom(p, prev);
        }
        // still descending: extrapolate, at least doubling and at most 10×
        let next = cubic_min(prev, p)
            .filter(|&c| c > 2.0 * t && c < 10.0 * t)
            .unwrap_or(2.0 * t);
        prev = p;
        t = next;
    }
    s.fallback()
}
