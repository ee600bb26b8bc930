use std::collections::VecDeque;

use super::{dot, norm};

/// Limited-memory BFGS history: the most recent `history_size` pairs of
/// position change `s` and gradient change `y`.
#[derive(Debug, Clone)]
pub struct LbfgsState {
    history_size: usize,
    pairs: VecDeque<Pair>,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

impl Default for LbfgsState {
    fn default() -> Self {
        Self::new(10)
    }
}

impl LbfgsState {
    pub fn new(history_size: usize) -> Self {
        assert!(history_size > 0, "history size must be positive");
        Self {
            history_size,
            pairs: VecDeque::with_capacity(history_size),
            iteration: 0,
        }
    }

    pub fn history_size(&self) -> usize {
        self.history_size
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` unless the curvature `s·y` is not safely positive.
    /// Returns whether the pair was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !sy.is_finite() || sy <= 1e-10 * norm(&s) * norm(&y) {
            return false;
        }
        if self.pairs.len() == self.history_size {
            self.pairs.pop_front();
        }
        self.pairs.push_back(Pair { rho: 1.0 / sy, s, y });
        true
    }

    /// Initial inverse-Hessian scale `s·y / y·y` of the newest pair.
    pub fn gamma(&self) -> f64 {
        self.pairs
            .back()
            .map_or(1.0, |p| 1.0 / (p.rho * dot(&p.y, &p.y)))
    }
}

/// Search direction `-H·grad` from the two-loop recursion.
pub fn lbfgs_direction(state: &LbfgsState, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = vec![0.0; state.pairs.len()];
    for (i, p) in state.pairs.iter().enumerate().rev() {
        let a = p.rho * dot(&p.s, &q);
        alphas[i] = a;
        for (qj, yj) in q.iter_mut().zip(&p.y) {
            *qj -= a * yj;
        }
    }
    let gamma = state.gamma();
    for v in q.iter_mut() {
        *v *= gamma;
    }
    for (p, &a) in state.pairs.iter().zip(&alphas) {
        let b = p.rho * dot(&p.y, &q);
        for (qj, sj) in q.iter_mut().zip(&p.s) {
            *qj += (a - b) * sj;
        }
    }
    for v in q.iter_mut() {
        *v = -*v;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_history_is_steepest_descent() {
        let s = LbfgsState::default();
        assert_eq!(lbfgs_direction(&s, &[1.0, -2.0]), vec![-1.0, 2.0]);
        assert_eq!(lbfgs_direction(&s, &[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn curvature_skip_keeps_length() {
        let mut st = LbfgsState::new(3);
        assert!(st.push(vec![1.0, 0.0], vec![2.0, 0.0]));
        assert!(!st.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(!st.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        assert_eq!(st.len(), 1);
        let g = [0.3, -0.7];
        let d = lbfgs_direction(&st, &g);
        assert!(dot(&g, &d) < 0.0);
    }

    #[test]
    fn history_is_bounded() {
        let mut st = LbfgsState::new(2);
        for k in 1..5 {
            st.push(vec![k as f64, 1.0], vec![k as f64, 2.0]);
        }
        assert_eq!(st.len(), 2);
    }

    #[test]
    fn exact_quadratic_recovers_inverse_hessian() {
        // f = ½ xᵀ D x with D = diag(1, 4); steps taken with exact line search
        let d = [1.0, 4.0];
        let grad = |x: &[f64]| vec![d[0] * x[0], d[1] * x[1]];
        let exact_step = |x: &[f64], p: &[f64]| {
            let g = grad(x);
            let dp: f64 = p.iter().zip(&d).map(|(pi, di)| pi * pi * di).sum();
            -dot(&g, p) / dp
        };
        let mut st = LbfgsState::default();
        let mut x = vec![3.0, -1.0];
        for _ in 0..2 {
            let g = grad(&x);
            let p = lbfgs_direction(&st, &g);
            let t = exact_step(&x, &p);
            let x_new: Vec<f64> = x.iter().zip(&p).map(|(xi, pi)| xi + t * pi).collect();
            let g_new = grad(&x_new);
            let s = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            assert!(st.push(s, y));
            x = x_new;
        }
        let g = [0.7, -1.3];
        let dir = lbfgs_direction(&st, &g);
        let want = [-g[0] / d[0], -g[1] / d[1]];
        for (a, b) in dir.iter().zip(want) {
            assert!((a - b).abs() <= 1e-8 * b.abs(), "{a} vs {b}");
        }
    }
}
