//! Piecewise-smooth image sequence standing in for a dynamic MRI scan: a smooth
//! background, a static bright bar and a slowly moving Gaussian blob.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{SupportSet, Wavelet2d};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomMotion {
    /// Blob velocity in pixels per frame along (row, col).
    pub velocity: (f64, f64),
    pub blob_amplitude: f64,
    /// Blob standard deviation as a fraction of the image side.
    pub blob_width: f64,
    /// Relative amplitude of a slow periodic change of the blob width.
    pub deform: f64,
    /// Energy fraction defining the significant-coefficient support.
    pub energy: f64,
    /// Largest accepted per-frame addition or removal count relative to `|N_t|`.
    pub max_change: f64,
}

impl Default for PhantomMotion {
    fn default() -> Self {
        PhantomMotion {
            velocity: (0.05, 0.1),
            blob_amplitude: 80.0,
            blob_width: 0.06,
            deform: 0.0,
            energy: 0.99,
            max_change: 0.02,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhantomSequence {
    pub rows: usize,
    pub cols: usize,
    /// Row-major images.
    pub frames: Vec<Vec<f64>>,
    /// Wavelet coefficients of each frame.
    pub coeffs: Vec<DVector<f64>>,
    /// Significant-coefficient support of each frame.
    pub supports: Vec<SupportSet>,
    /// Motion actually used (slowed down if the requested one changed the support too fast).
    pub motion: PhantomMotion,
    /// Largest per-frame `|N_t \ N_{t-1}| / |N_t|` and `|N_{t-1} \ N_t| / |N_t|`.
    pub max_add_frac: f64,
    pub max_remove_frac: f64,
    /// Smallest and largest `|N_t| / m`.
    pub support_frac: (f64, f64),
}

/// Smallest set of largest-magnitude entries carrying `energy` of the total.
pub fn energy_support(x: &DVector<f64>, energy: f64) -> SupportSet {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    let total = x.norm_squared();
    let mut acc = 0.0;
    let mut keep = Vec::new();
    for i in order {
        if acc >= energy * total {
            break;
        }
        acc += x[i] * x[i];
        keep.push(i);
    }
    SupportSet::new(keep)
}

fn render(rows: usize, cols: usize, t: usize, motion: &PhantomMotion) -> Vec<f64> {
    use std::f64::consts::TAU;
    let side = rows.min(cols) as f64;
    let cy = 0.6 * rows as f64 + motion.velocity.0 * t as f64;
    let cx = 0.5 * cols as f64 + motion.velocity.1 * t as f64;
    let width = motion.blob_width * side * (1.0 + motion.deform * (TAU * t as f64 / 40.0).sin());
    let mut img = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let (u, v) = (i as f64 / rows as f64, j as f64 / cols as f64);
            let mut val = 60.0 + 25.0 * (TAU * v).cos() + 15.0 * (TAU * u).sin() + 10.0 * (TAU * (u + v)).cos();
            if (rows / 4..3 * rows / 4).contains(&i) && (3 * cols / 16..5 * cols / 16).contains(&j) {
                val += 50.0;
            }
            // Periodic distance to the blob centre.
            let dy = (i as f64 - cy).rem_euclid(rows as f64);
            let dy = dy.min(rows as f64 - dy);
            let dx = (j as f64 - cx).rem_euclid(cols as f64);
            let dx = dx.min(cols as f64 - dx);
            val += motion.blob_amplitude * (-(dx * dx + dy * dy) / (2.0 * width * width)).exp();
            img[i * cols + j] = val;
        }
    }
    img
}

const SLOWDOWNS: usize = 6;

/// Renders `t_len` frames; if the significant support changes faster than
/// `motion.max_change`, the velocity and deformation are halved and the sequence redrawn.
pub fn generate_phantom_sequence(rows: usize, cols: usize, t_len: usize, motion: &PhantomMotion) -> Result<PhantomSequence> {
    let wavelet = Wavelet2d::new(rows, cols, 2)
        .ok_or_else(|| Error::InvalidParameter(format!("image {rows}x{cols} not divisible by 4")))?;
    let mut motion = motion.clone();
    for _ in 0..=SLOWDOWNS {
        let mut frames = Vec::with_capacity(t_len);
        let mut coeffs = Vec::with_capacity(t_len);
        let mut supports = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let img = render(rows, cols, t, &motion);
            let mut c = img.clone();
            wavelet.forward(&mut c);
            let c = DVector::from_vec(c);
            supports.push(energy_support(&c, motion.energy));
            coeffs.push(c);
            frames.push(img);
        }
        let m = (rows * cols) as f64;
        let (mut add, mut rem) = (0.0f64, 0.0f64);
        for w in supports.windows(2) {
            let size = w[1].len().max(1) as f64;
            add = add.max(w[1].difference(&w[0]).len() as f64 / size);
            rem = rem.max(w[0].difference(&w[1]).len() as f64 / size);
        }
        let sizes = supports.iter().map(|s| s.len() as f64 / m);
        let support_frac = sizes.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if add < motion.max_change && rem < motion.max_change {
            return Ok(PhantomSequence {
                rows,
                cols,
                frames,
                coeffs,
                supports,
                motion,
                max_add_frac: add,
                max_remove_frac: rem,
                support_frac,
            });
        }
        motion.velocity = (motion.velocity.0 / 2.0, motion.velocity.1 / 2.0);
        motion.deform /= 2.0;
    }
    Err(Error::Numerical("phantom support changes too fast even after slowing the motion".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_phantom_has_constant_support() {
        let motion = PhantomMotion { velocity: (0.0, 0.0), ..Default::default() };
        let ph = generate_phantom_sequence(32, 32, 5, &motion).unwrap();
        assert!(ph.frames.iter().all(|f| *f == ph.frames[0]));
        assert_eq!(ph.max_add_frac, 0.0);
        assert_eq!(ph.max_remove_frac, 0.0);
    }

    #[test]
    fn default_phantom_statistics() {
        let ph = generate_phantom_sequence(32, 32, 30, &PhantomMotion::default()).unwrap();
        assert!(ph.max_add_frac < 0.02 && ph.max_remove_frac < 0.02);
        assert!(ph.support_frac.0 >= 0.05 && ph.support_frac.1 <= 0.09, "{:?}", ph.support_frac);
        // The sequence actually moves.
        assert!(ph.frames[0] != ph.frames[29]);
    }

    #[test]
    fn energy_support_cut() {
        let x = DVector::from_vec(vec![0.1, 10.0, -1.0, 0.0]);
        assert_eq!(energy_support(&x, 0.99).indices(), &[1]);
        assert_eq!(energy_support(&x, 0.999).indices(), &[1, 2]);
    }
}
