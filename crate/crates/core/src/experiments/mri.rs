//! Recursive recovery of a wavelet-compressible image sequence from
//! undersampled Fourier measurements.

use serde::{Deserialize, Serialize};

use super::dynamic::{check_noise_and_grid, parse_algos, run_trials, DynamicReport, TrialData, TrialSetup};
use super::ExperimentConfig;
use crate::dynamic::{Algorithm, DynamicParams};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;

use crate::operators::{frequency_radius, PartialFourierWavelet};
use crate::simulation::{
    add_noise, generate_phantom_sequence, intersected_mask, low_frequency_mask, rng, trial_seed, PhantomMotion,
};
use crate::tuning::LAMBDA_GRID;

pub(crate) const MRI_DEFAULT: &[Algorithm] = &[
    Algorithm::RegModBpdn,
    Algorithm::ModBpdn,
    Algorithm::WeightedL1,
    Algorithm::KfModCs,
    Algorithm::DcsAmp,
    Algorithm::BpdnResidual,
    Algorithm::Bpdn,
    Algorithm::PmCsKf,
];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MriConfig {
    pub rows: usize,
    pub cols: usize,
    pub t_len: usize,
    /// Sampled frequencies at the two calibration frames.
    pub n1: usize,
    /// Sampled frequencies at every later frame.
    pub n_t: usize,
    /// Noise variance of each real and imaginary measurement component.
    pub sigma_obs2: f64,
    /// Frequencies with `|k|` up to this radius are sampled in every frame
    /// (counted within `n1` and `n_t`); negative disables.
    pub center_radius: f64,
    pub motion: PhantomMotion,
    pub lambda_grid: Vec<f64>,
    pub params: DynamicParams,
    /// Refit the calibration estimates by least squares on their support.
    pub debias: bool,
}

impl Default for MriConfig {
    fn default() -> Self {
        MriConfig {
            rows: 32,
            cols: 32,
            t_len: 20,
            n1: 184,
            n_t: 62,
            sigma_obs2: 10.0,
            center_radius: 5.0,
            motion: PhantomMotion::default(),
            lambda_grid: LAMBDA_GRID.to_vec(),
            params: DynamicParams::default(),
            debias: true,
        }
    }
}

impl MriConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.rows * self.cols;
        if m == 0 || self.rows % 4 != 0 || self.cols % 4 != 0 {
            return Err(Error::InvalidParameter(format!("image {}x{} must be non-empty and divisible by 4", self.rows, self.cols)));
        }
        if self.n1 == 0 || self.n_t == 0 || self.n1 > m || self.n_t > m {
            return Err(Error::InvalidParameter(format!("n1 = {}, n_t = {} must lie in 1..={m}", self.n1, self.n_t)));
        }
        if self.t_len < 3 {
            return Err(Error::InvalidParameter("t_len must leave at least one frame after calibration".into()));
        }
        check_noise_and_grid(self.sigma_obs2, &self.lambda_grid)
    }
}

/// The central disk, then frequencies from the intersected low-frequency
/// masks (one mask for calibration frames, where the intersection is too
/// small at these sizes), topped up from a single mask if needed.
fn frame_samples(mc: &MriConfig, n: usize, calibration: bool, seed: u64) -> Result<Vec<usize>> {
    let (rows, cols) = (mc.rows, mc.cols);
    let m = rows * cols;
    if n == m {
        return Ok((0..m).collect());
    }
    let mut center: Vec<usize> = (0..m).filter(|&i| frequency_radius(i, rows, cols) <= mc.center_radius).collect();
    center.sort_by(|&i, &j| frequency_radius(i, rows, cols).total_cmp(&frequency_radius(j, rows, cols)).then(i.cmp(&j)));
    center.truncate(n);
    let mut chosen = vec![false; m];
    center.iter().for_each(|&i| chosen[i] = true);
    let mut out = center;
    let mut take = |pool: Vec<usize>, out: &mut Vec<usize>, r: &mut rand_chacha::ChaCha8Rng| {
        let mut fresh: Vec<usize> = pool.into_iter().filter(|&i| !chosen[i]).collect();
        fresh.shuffle(r);
        for i in fresh {
            if out.len() == n {
                break;
            }
            chosen[i] = true;
            out.push(i);
        }
    };
    let mut r = rng(seed);
    // Small images may not reach `n` frequencies in the intersection; the
    // top-up below covers the shortfall either way.
    let first = if calibration {
        low_frequency_mask(rows, cols, n, seed)
    } else {
        intersected_mask(rows, cols, n, seed).or_else(|_| low_frequency_mask(rows, cols, n, seed))
    };
    take(first?, &mut out, &mut r);
    let mut round = 1u64;
    while out.len() < n {
        take(low_frequency_mask(rows, cols, n, trial_seed(seed, "top-up", round))?, &mut out, &mut r);
        round += 1;
    }
    out.sort_unstable();
    Ok(out)
}

/// Phantom (shared by every trial), a fresh sampling pattern per frame and noise.
fn mri_trial(mc: &MriConfig, seed: u64) -> Result<TrialData> {
    let ph = generate_phantom_sequence(mc.rows, mc.cols, mc.t_len, &mc.motion)?;
    let mut mats = Vec::with_capacity(mc.t_len);
    let mut ys = Vec::with_capacity(mc.t_len);
    for (k, x) in ph.coeffs.iter().enumerate() {
        let n = if k < 2 { mc.n1 } else { mc.n_t };
        let samples = frame_samples(mc, n, k < 2, trial_seed(seed, "mask", k as u64))?;
        let a = PartialFourierWavelet::new(mc.rows, mc.cols, 2, samples)?.matrix().clone();
        ys.push(add_noise(&(&a * x), mc.sigma_obs2, trial_seed(seed, "noise", k as u64)));
        mats.push(a);
    }
    Ok(TrialData {
        times: (1..=mc.t_len).collect(),
        truth: ph.coeffs,
        supports: ph.supports,
        op_of: (0..mc.t_len).collect(),
        mats,
        ys,
    })
}

pub fn run_mri_experiment(cfg: &ExperimentConfig) -> Result<DynamicReport> {
    cfg.validate()?;
    let mc = &cfg.mri;
    let algos = parse_algos(&cfg.algos, MRI_DEFAULT)?;
    run_trials(cfg, &algos, "mri", |seed| {
        Ok(TrialSetup {
            data: mri_trial(mc, seed)?,
            sigma_obs2: mc.sigma_obs2,
            grid: mc.lambda_grid.clone(),
            params: mc.params.clone(),
            debias: mc.debias,
        })
    })
}
