//! Parameter selection from two calibration frames, recovery-condition
//! checkers and weak-threshold computation.

mod bound;
mod checks;
mod weak;

pub use bound::{compute_bound, BoundReport, BoundTerms, NoiseNorms};
pub use checks::{check_recovery, CheckInput, CheckReport, ConditionResult, RecoveryCheck, RicCache};
pub use weak::{modcs_threshold_from_bp, psi_terms, weak_threshold, PsiTerms, WeakThresholdQuery};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::SupportSet;
use crate::support::{auto_alpha, threshold_simple, AlphaRule};

/// Lambda values scanned by default.
pub const LAMBDA_GRID: [f64; 8] = [0.5, 0.2, 0.1, 0.05, 0.01, 0.005, 0.001, 0.0001];

/// Lambda used when tuning gamma for programs without a prior-value term.
pub const MODBPDN_LAMBDA: f64 = 0.0001;

/// Floor applied to variance estimates.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Parameters derived from two calibration estimates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TunedParams {
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// `|Δe| / |N|` for weighted-l1.
    pub tau: f64,
    pub t_size: usize,
    pub n_size: usize,
    pub w_inf: f64,
    pub w_l2: f64,
    /// Bound value at the chosen lambda.
    pub bound: f64,
}

struct Calibration {
    alpha: f64,
    t: SupportSet,
    n: SupportSet,
    x: DVector<f64>,
    noise: NoiseNorms,
}

fn calibrate(xhat1: &DVector<f64>, xhat2: &DVector<f64>, y2: &DVector<f64>, a: &DMatrix<f64>) -> Result<Calibration> {
    if y2.len() != a.nrows() || xhat2.len() != a.ncols() {
        return Err(Error::Dimension("calibration frames do not match the operator".into()));
    }
    calibrate_with_noise(xhat1, xhat2, NoiseNorms::of(&(y2 - a * xhat2)), a.ncols())
}

fn calibrate_with_noise(xhat1: &DVector<f64>, xhat2: &DVector<f64>, noise: NoiseNorms, m: usize) -> Result<Calibration> {
    if xhat1.len() != m || xhat2.len() != m {
        return Err(Error::Dimension("calibration frames do not match the operator".into()));
    }
    let (alpha, _) = auto_alpha(xhat1, &AlphaRule::default());
    let t = threshold_simple(xhat1, alpha);
    let n = threshold_simple(xhat2, alpha);
    let x = DVector::from_fn(m, |i, _| if n.contains(i) { xhat2[i] } else { 0.0 });
    Ok(Calibration { alpha, t, n, x, noise })
}

/// Pick `lambda` from `grid` by the smallest computable bound, then take the
/// matching `gamma*`. `T`, `N` come from thresholding the two calibration
/// estimates; `mu_hat = xhat1`, `x = xhat2` on `N`, and `y2 - A xhat2`
/// stands in for the noise.
pub fn tune_gamma_lambda(
    xhat1: &DVector<f64>,
    xhat2: &DVector<f64>,
    y2: &DVector<f64>,
    a: &DMatrix<f64>,
    grid: &[f64],
) -> Result<(TunedParams, BoundReport)> {
    let c = calibrate(xhat1, xhat2, y2, a)?;
    pick_lambda(&c, xhat1, a, grid)
}

/// As [`tune_gamma_lambda`], with the noise norms given directly and the
/// bound evaluated on `a`, which may differ from the calibration operator.
pub fn tune_gamma_lambda_with_noise(
    xhat1: &DVector<f64>,
    xhat2: &DVector<f64>,
    noise: NoiseNorms,
    a: &DMatrix<f64>,
    grid: &[f64],
) -> Result<(TunedParams, BoundReport)> {
    let c = calibrate_with_noise(xhat1, xhat2, noise, a.ncols())?;
    pick_lambda(&c, xhat1, a, grid)
}

fn pick_lambda(c: &Calibration, xhat1: &DVector<f64>, a: &DMatrix<f64>, grid: &[f64]) -> Result<(TunedParams, BoundReport)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty lambda grid".into()));
    }
    let mut best: Option<BoundReport> = None;
    for &lam in grid {
        let r = compute_bound(a, &c.x, &c.t, xhat1, lam, c.noise)?;
        if r.feasible && best.as_ref().map_or(true, |b| r.bound < b.bound) {
            best = Some(r);
        }
    }
    let r = best.ok_or_else(|| Error::Numerical(format!("no feasible lambda in grid {grid:?}")))?;
    let extras = c.t.difference(&c.n).len();
    let tau = if c.n.is_empty() { 0.0 } else { (extras as f64 / c.n.len() as f64).min(1.0) };
    let p = TunedParams {
        alpha: c.alpha,
        gamma: r.gamma_star,
        lambda: r.lambda,
        tau,
        t_size: c.t.len(),
        n_size: c.n.len(),
        w_inf: c.noise.linf,
        w_l2: c.noise.l2,
        bound: r.bound,
    };
    Ok((p, r))
}

/// Random-walk and observation variances for the Kalman-filter based
/// algorithms: the mean squared change over `N̂2`, and `||y2 - A xhat2||^2 / m`
/// with `m` the signal length. Both are floored at [`VARIANCE_FLOOR`].
pub fn tune_kf_params(
    xhat1: &DVector<f64>,
    xhat2: &DVector<f64>,
    y2: &DVector<f64>,
    a: &DMatrix<f64>,
) -> Result<(f64, f64)> {
    let c = calibrate(xhat1, xhat2, y2, a)?;
    if c.n.is_empty() {
        return Err(Error::InvalidParameter("second calibration estimate has empty support".into()));
    }
    let sys = c.n.iter().map(|i| (xhat2[i] - xhat1[i]).powi(2)).sum::<f64>() / c.n.len() as f64;
    let obs = c.noise.l2.powi(2) / a.ncols() as f64;
    Ok((sys.max(VARIANCE_FLOOR), obs.max(VARIANCE_FLOOR)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{add_noise, gaussian_matrix, rng};
    use rand_distr::{Distribution, StandardNormal};

    fn sparse(m: usize, idx: &[usize], seed: u64) -> DVector<f64> {
        let mut r = rng(seed);
        let mut x = DVector::zeros(m);
        for &i in idx {
            let d: f64 = StandardNormal.sample(&mut r);
            x[i] = 2.0 + d.abs();
        }
        x
    }

    #[test]
    fn identical_noise_free_frames_give_zero_gamma() {
        let a = gaussian_matrix(30, 50, 1, true);
        let x = sparse(50, &[1, 7, 20, 33], 2);
        let y = &a * &x;
        let (p, r) = tune_gamma_lambda(&x, &x, &y, &a, &[MODBPDN_LAMBDA]).unwrap();
        assert!(r.delta_u.is_empty());
        assert_eq!(r.k_min, 0);
        assert!(p.gamma.abs() < 1e-12, "gamma {}", p.gamma);
        assert_eq!(p.tau, 0.0);
        assert_eq!(p.lambda, MODBPDN_LAMBDA);
    }

    #[test]
    fn chosen_lambda_minimises_the_bound() {
        let a = gaussian_matrix(50, 80, 3, true);
        let x1 = sparse(80, &[1, 5, 9, 14, 30, 41], 4);
        let mut x2 = x1.clone() * 1.05;
        x2[41] = 0.0;
        x2[60] = 2.5;
        let y2 = add_noise(&(&a * &x2), 1e-4, 5);
        let (p, _) = tune_gamma_lambda(&x1, &x2, &y2, &a, &LAMBDA_GRID).unwrap();
        let c = calibrate(&x1, &x2, &y2, &a).unwrap();
        for &lam in &LAMBDA_GRID {
            let r = compute_bound(&a, &c.x, &c.t, &x1, lam, c.noise).unwrap();
            assert!(!r.feasible || r.bound >= p.bound);
        }
        // One extra (41) among six estimated support entries.
        assert!((p.tau - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn kf_params_are_floored() {
        let a = gaussian_matrix(20, 30, 6, true);
        let x = sparse(30, &[2, 3, 11], 7);
        let y = &a * &x;
        let (sys, obs) = tune_kf_params(&x, &x, &y, &a).unwrap();
        assert_eq!(sys, VARIANCE_FLOOR);
        assert_eq!(obs, VARIANCE_FLOOR);
        let z = DVector::zeros(30);
        assert!(tune_kf_params(&z, &z, &y, &a).is_err());
    }

    #[test]
    fn random_walk_variance_is_recovered_on_average() {
        // Exact calibration estimates of a random walk on a fixed support:
        // the estimator is the sample variance of the increments.
        let (m, s, sigma2) = (100usize, 20usize, 0.04f64);
        let a = gaussian_matrix(60, m, 8, true);
        let support: Vec<usize> = (0..s).map(|i| 5 * i).collect();
        let mut total = 0.0;
        for trial in 0..100u64 {
            let x1 = sparse(m, &support, 100 + trial);
            let mut r = rng(300 + trial);
            let x2 = DVector::from_fn(m, |i, _| {
                let d: f64 = StandardNormal.sample(&mut r);
                if x1[i] != 0.0 {
                    x1[i] + sigma2.sqrt() * d
                } else {
                    0.0
                }
            });
            let y2 = &a * &x2;
            total += tune_kf_params(&x1, &x2, &y2, &a).unwrap().0;
        }
        let mean = total / 100.0;
        assert!((mean - sigma2).abs() < 0.5 * sigma2, "mean {mean}");
    }
}
