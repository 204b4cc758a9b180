//! Zero-attracting LMS over the measurement rows, one scalar at a time.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Frame;
use crate::linalg;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmsConfig {
    /// Step size; `None` uses `0.5 / max_k ||a_k||^2` of each frame.
    pub mu: Option<f64>,
    /// Zero-attractor weight.
    pub gamma: f64,
    /// Sweeps over each frame's rows; sweeps after the first visit rows in random order.
    pub passes: usize,
    pub seed: u64,
}

impl Default for LmsConfig {
    fn default() -> Self {
        LmsConfig { mu: None, gamma: 1e-4, passes: 1, seed: 0 }
    }
}

/// `h <- h + mu e a_k - mu gamma sgn(h)` with `e = y_k - a_k' h`, over every
/// row of every frame. Returns the estimate after each frame.
pub fn za_lms_track(frames: &[Frame], h0: &DVector<f64>, cfg: &LmsConfig) -> Vec<DVector<f64>> {
    let mut rng = crate::simulation::rng(cfg.seed);
    let mut h = h0.clone();
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        let n = f.a.nrows();
        let mu = cfg.mu.unwrap_or_else(|| {
            let max_row = (0..n).map(|k| f.a.row(k).norm_squared()).fold(0.0, f64::max);
            if max_row > 0.0 {
                0.5 / max_row
            } else {
                0.0
            }
        });
        let mut order: Vec<usize> = (0..n).collect();
        for pass in 0..cfg.passes.max(1) {
            if pass > 0 {
                order.shuffle(&mut rng);
            }
            for &k in &order {
                let row = f.a.row(k);
                let e = f.y[k] - row.dot(&h.transpose());
                for i in 0..h.len() {
                    h[i] += mu * e * row[i] - mu * cfg.gamma * linalg::sign(h[i]);
                }
            }
        }
        out.push(h.clone());
    }
    out
}
