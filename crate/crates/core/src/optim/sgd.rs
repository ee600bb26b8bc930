/// Gradient descent with heavy-ball momentum.
#[derive(Debug, Clone)]
pub struct SgdState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub velocity: Vec<f64>,
}

impl SgdState {
    pub fn new(learning_rate: f64, momentum: f64, dim: usize) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: vec![0.0; dim],
        }
    }
}

/// `v ← μ·v − lr·g`, then `x ← x + v`.
pub fn sgd_step(state: &mut SgdState, x: &[f64], grad: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), grad.len(), "parameter and gradient lengths differ");
    assert_eq!(x.len(), state.velocity.len(), "velocity length differs");
    let (mu, lr) = (state.momentum, state.learning_rate);
    state
        .velocity
        .iter_mut()
        .zip(x.iter().zip(grad))
        .map(|(v, (&xi, &gi))| {
            *v = mu * *v - lr * gi;
            xi + *v
        })
        .collect()
}
