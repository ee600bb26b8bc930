/// Style weight decayed multiplicatively once per iteration:
/// `β(k) = β0 · (1 − decay)^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleWeightSchedule {
    pub beta0: f64,
    pub decay_per_iter: f64,
}

impl StyleWeightSchedule {
    pub fn new(beta0: f64, decay_per_iter: f64) -> Self {
        Self {
            beta0,
            decay_per_iter,
        }
    }

    pub fn fixed(beta0: f64) -> Self {
        Self::new(beta0, 0.0)
    }

    /// Per-iteration retention factor `1 − decay`.
    pub fn factor(&self) -> f64 {
        1.0 - self.decay_per_iter
    }

    pub fn beta(&self, k: usize) -> f64 {
        let k = i32::try_from(k).unwrap_or(i32::MAX);
        self.beta0 * self.factor().powi(k)
    }
}
