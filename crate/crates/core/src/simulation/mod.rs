//! Ground-truth generators, measurement simulators and error metrics.

mod model;
mod phantom;

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::operators::{frequency_radius, PartialFourierWavelet};
use crate::operators::MeasurementOperator;

pub use model::{
    audit_trace, generate_model_sequence, Addition, EventKind, SequenceTrace, SignalModelParams, SupportEvent,
};
pub use phantom::{generate_phantom_sequence, PhantomMotion, PhantomSequence};

/// Deterministic RNG for a seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one trial of one experiment, independent of scheduling order.
pub fn trial_seed(master: u64, experiment: &str, trial: u64) -> u64 {
    // FNV-1a over the experiment name.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in experiment.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(splitmix64(master ^ h) ^ trial)
}

/// `n x m` matrix of i.i.d. standard normal entries, optionally with unit-norm columns.
pub fn gaussian_matrix(n: usize, m: usize, seed: u64, normalize: bool) -> DMatrix<f64> {
    let mut r = rng(seed);
    let mut a = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut r));
    if normalize {
        for mut c in a.column_iter_mut() {
            let norm = c.norm();
            if norm > 0.0 {
                c /= norm;
            }
        }
    }
    a
}

pub fn make_gaussian_operator(n: usize, m: usize, seed: u64, normalize: bool) -> MeasurementOperator {
    MeasurementOperator::Dense(gaussian_matrix(n, m, seed, normalize))
}

/// Adds i.i.d. `N(0, sigma2)` noise.
pub fn add_noise(clean: &DVector<f64>, sigma2: f64, seed: u64) -> DVector<f64> {
    if sigma2 == 0.0 {
        return clean.clone();
    }
    let sd = sigma2.sqrt();
    let mut r = rng(seed);
    clean.map(|v| {
        let z: f64 = StandardNormal.sample(&mut r);
        v + sd * z
    })
}

/// Per-time NRMSE `sqrt(sum_k ||x - xhat||^2) / sqrt(sum_k ||x||^2)`, with
/// sums over trials `k`. Indexing is `[trial][t]`.
pub fn nrmse(truth: &[Vec<DVector<f64>>], estimate: &[Vec<DVector<f64>>]) -> Result<Vec<f64>> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::Dimension("truth and estimate need the same nonzero trial count".into()));
    }
    let t_len = truth[0].len();
    let mut num = vec![0.0; t_len];
    let mut den = vec![0.0; t_len];
    for (xs, hs) in truth.iter().zip(estimate) {
        if xs.len() != t_len || hs.len() != t_len {
            return Err(Error::Dimension("ragged sequence lengths".into()));
        }
        for t in 0..t_len {
            num[t] += (&xs[t] - &hs[t]).norm_squared();
            den[t] += xs[t].norm_squared();
        }
    }
    Ok(num.iter().zip(&den).map(|(n, d)| if *d > 0.0 { (n / d).sqrt() } else { n.sqrt() }).collect())
}

/// Accumulates squared errors trial by trial so sequences need not be kept.
#[derive(Clone, Debug, Default)]
pub struct NrmseAccumulator {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl NrmseAccumulator {
    pub fn new(t_len: usize) -> Self {
        NrmseAccumulator { num: vec![0.0; t_len], den: vec![0.0; t_len] }
    }

    pub fn add(&mut self, t: usize, truth: &DVector<f64>, estimate: &DVector<f64>) {
        self.num[t] += (truth - estimate).norm_squared();
        self.den[t] += truth.norm_squared();
    }

    pub fn merge(&mut self, other: &NrmseAccumulator) {
        for t in 0..self.num.len() {
            self.num[t] += other.num[t];
            self.den[t] += other.den[t];
        }
    }

    pub fn finish(&self) -> Vec<f64> {
        self.num.iter().zip(&self.den).map(|(n, d)| if *d > 0.0 { (n / d).sqrt() } else { n.sqrt() }).collect()
    }
}

/// Draws `count` distinct DFT indices with weights `(1 + |k|/k_max)^-2`.
pub fn low_frequency_mask(rows: usize, cols: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    let m = rows * cols;
    if count > m {
        return Err(Error::InvalidParameter(format!("cannot sample {count} of {m} frequencies")));
    }
    let kmax = frequency_radius(rows / 2 * cols + cols / 2, rows, cols).max(1.0);
    let idx: Vec<usize> = (0..m).collect();
    let mut r = rng(seed);
    let mut chosen: Vec<usize> = idx
        .choose_multiple_weighted(&mut r, count, |&i| (1.0 + frequency_radius(i, rows, cols) / kmax).powi(-2))
        .map_err(|e| Error::Numerical(format!("weighted sampling failed: {e}")))?
        .copied()
        .collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Fractions of the three low-frequency masks that are intersected.
pub const MASK_FRACTIONS: [f64; 3] = [0.5, 0.4, 0.3];
const MASK_RETRIES: u64 = 20;

/// Intersects three low-frequency masks and keeps `n` of the surviving
/// frequencies uniformly at random.
pub fn intersected_mask(rows: usize, cols: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    let m = rows * cols;
    for attempt in 0..MASK_RETRIES {
        let base = splitmix64(seed ^ attempt.wrapping_mul(0xA24B_AED4_963E_E407));
        let mut keep = vec![0u8; m];
        for (j, f) in MASK_FRACTIONS.iter().enumerate() {
            let count = (f * m as f64).round() as usize;
            for i in low_frequency_mask(rows, cols, count, splitmix64(base + j as u64))? {
                keep[i] += 1;
            }
        }
        let mut pool: Vec<usize> = (0..m).filter(|&i| keep[i] == 3).collect();
        if pool.len() >= n {
            let mut r = rng(splitmix64(base + 7));
            pool.shuffle(&mut r);
            pool.truncate(n);
            pool.sort_unstable();
            return Ok(pool);
        }
    }
    Err(Error::Numerical(format!("mask intersection smaller than {n} after {MASK_RETRIES} retries")))
}

/// Partial-Fourier measurements of a 2-level Daubechies-4 wavelet-sparse image
/// with `n` frequencies from [`intersected_mask`].
pub fn make_partial_fourier_operator(rows: usize, cols: usize, n: usize, seed: u64) -> Result<MeasurementOperator> {
    let samples = if n == rows * cols { (0..n).collect() } else { intersected_mask(rows, cols, n, seed)? };
    Ok(MeasurementOperator::PartialFourier(PartialFourierWavelet::new(rows, cols, 2, samples)?))
}

const FRAME_MAGIC: &[u8; 4] = b"DCSF";

/// Writes frames as: magic, then `rows`, `cols`, `t_len` as little-endian
/// `u32`, a dtype byte (1 = f64), then row-major little-endian frames.
pub fn write_frames<W: Write>(mut w: W, rows: usize, cols: usize, frames: &[Vec<f64>]) -> Result<()> {
    if let Some(f) = frames.iter().find(|f| f.len() != rows * cols) {
        return Err(Error::Dimension(format!("frame of length {} is not {rows}x{cols}", f.len())));
    }
    w.write_all(FRAME_MAGIC)?;
    for v in [rows, cols, frames.len()] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&[1u8])?;
    for f in frames {
        for v in f {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads the container written by [`write_frames`]: `(rows, cols, frames)`.
pub fn read_frames<R: Read>(mut r: R) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FRAME_MAGIC {
        return Err(Error::Parse("not a frame container".into()));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)?;
    if dtype[0] != 1 {
        return Err(Error::Parse(format!("unsupported dtype {}", dtype[0])));
    }
    let [rows, cols, t_len] = dims;
    let mut frames = Vec::with_capacity(t_len);
    let mut b = [0u8; 8];
    for _ in 0..t_len {
        let mut f = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut b)?;
            f.push(f64::from_le_bytes(b));
        }
        frames.push(f);
    }
    Ok((rows, cols, frames))
}

pub fn save_frames(path: &Path, rows: usize, cols: usize, frames: &[Vec<f64>]) -> Result<()> {
    write_frames(std::io::BufWriter::new(std::fs::File::create(path)?), rows, cols, frames)
}
