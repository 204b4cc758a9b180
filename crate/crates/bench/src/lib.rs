//! Fixtures shared by the benchmarks.

use dyncs_core::simulation::{add_noise, gaussian_matrix, generate_model_sequence, SignalModelParams};
use dyncs_core::{DMatrix, DVector, PriorKnowledge, SupportSet};

/// One frame of the simulated dynamic experiment with prior knowledge from
/// the previous frame: `(A, y, x, prior)`.
pub struct Instance {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub x: DVector<f64>,
    pub prior: PriorKnowledge,
}

pub fn dynamic_instance(n: usize, seed: u64) -> Instance {
    let mut params = SignalModelParams::experiment_preset(seed);
    params.t_len = 12;
    let trace = generate_model_sequence(&params).expect("preset is valid");
    let (prev, x) = (&trace.x[10], trace.x[11].clone());
    let a = gaussian_matrix(n, params.m, seed + 1, true);
    let y = add_noise(&(&a * &x), 4e-4, seed + 2);
    let t = SupportSet::of_nonzeros(prev);
    let prior = PriorKnowledge { t, mu_hat: prev.clone(), tau: 0.1, lambda: 0.01, gamma: 0.01 };
    Instance { a, y, x, prior }
}
