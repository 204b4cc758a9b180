//! Kalman-filter based trackers: KF-ModCS and the pseudo-measurement CS-KF.

use nalgebra::{DMatrix, DVector};

use super::recursive::modbpdn_residual_solve;
use super::{DynState, DynamicParams};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::SupportSet;
use crate::support::threshold_simple;

/// Mean, covariance and support estimate. The covariance is stored on the
/// index set `cov_index` and is zero elsewhere.
#[derive(Clone, Debug)]
pub struct KfState {
    pub t: usize,
    pub xhat: DVector<f64>,
    pub support: SupportSet,
    pub cov_index: Vec<usize>,
    pub p: DMatrix<f64>,
}

impl KfState {
    /// `P_0 = sigma_sys2 I` on the initial support, or on every index when `full`.
    pub fn from_estimate(init: &DynState, sigma_sys2: f64, full: bool) -> Self {
        let m = init.xhat.len();
        let cov_index: Vec<usize> = if full { (0..m).collect() } else { init.support.indices().to_vec() };
        let k = cov_index.len();
        KfState {
            t: init.t,
            xhat: init.xhat.clone(),
            support: init.support.clone(),
            cov_index,
            p: DMatrix::identity(k, k) * sigma_sys2,
        }
    }

    /// Full `m x m` covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.xhat.len();
        let mut full = DMatrix::zeros(m, m);
        for (a, &i) in self.cov_index.iter().enumerate() {
            for (b, &j) in self.cov_index.iter().enumerate() {
                full[(i, j)] = self.p[(a, b)];
            }
        }
        full
    }

    /// Symmetry to `1e-10` (relative to the largest entry) and positive
    /// semi-definiteness: smallest eigenvalue `>= -1e-8` up to 512 indices,
    /// a jittered Cholesky factorisation beyond.
    pub fn check_covariance(&self) -> Result<()> {
        let p = &self.p;
        let scale = p.amax().max(1.0);
        let asym = (p - p.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::Numerical(format!("covariance asymmetric by {asym:.3e}")));
        }
        if p.nrows() == 0 {
            return Ok(());
        }
        if p.nrows() <= 512 {
            let (lo, _) = linalg::sym_extreme_eigs(p);
            if lo < -1e-8 * scale {
                return Err(Error::Numerical(format!("covariance has eigenvalue {lo:.3e}")));
            }
        } else {
            let jitter = DMatrix::<f64>::identity(p.nrows(), p.nrows()) * (1e-8 * scale);
            if (p + jitter).cholesky().is_none() {
                return Err(Error::Numerical("covariance is not positive semi-definite".into()));
            }
        }
        Ok(())
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let pt = p.transpose();
    *p += pt;
    *p *= 0.5;
}

/// Kalman update of the entries `idx` with prior covariance `m_cov`.
/// Returns the gain-corrected state and the posterior covariance.
fn kf_update(
    x: &mut DVector<f64>,
    idx: &[usize],
    m_cov: &DMatrix<f64>,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    sigma_obs2: f64,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let a_s = linalg::columns(a, idx);
    let am = &a_s * m_cov;
    let mut innov = &am * a_s.transpose();
    for i in 0..n {
        innov[(i, i)] += sigma_obs2;
    }
    let chol = innov.clone().cholesky().ok_or_else(|| {
        let sv = linalg::singular_values(&innov);
        Error::Numerical(format!(
            "innovation covariance not positive definite (condition {:.3e})",
            sv.first().copied().unwrap_or(0.0) / sv.last().copied().unwrap_or(0.0)
        ))
    })?;
    // K' = S^{-1} A_S M, so K = M A_S' S^{-1}.
    let kt = chol.solve(&am);
    let resid = y - a * &*x;
    let dx = kt.tr_mul(&resid);
    for (k, &i) in idx.iter().enumerate() {
        x[i] += dx[k];
    }
    let mut p = m_cov - kt.tr_mul(&am);
    symmetrize(&mut p);
    Ok(p)
}

/// KF-ModCS: modified-BPDN on the residual for the support, then a Kalman
/// update with process noise on the new support only.
pub fn step_kf_modcs(prev: &KfState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<KfState> {
    let m = a.ncols();
    let support = match &params.known_support {
        Some(s) => s.clone(),
        None => {
            let x_mod = modbpdn_residual_solve(&prev.xhat, &prev.support, y, a, params)?;
            threshold_simple(&x_mod, params.alpha())
        }
    };
    support.check_within(m)?;
    let idx = SupportSet::new(prev.cov_index.iter().copied()).union(&support);
    let idx: Vec<usize> = idx.indices().to_vec();
    let pos = |i: usize| idx.binary_search(&i).unwrap();
    let mut m_cov = DMatrix::zeros(idx.len(), idx.len());
    for (a_, &i) in prev.cov_index.iter().enumerate() {
        for (b_, &j) in prev.cov_index.iter().enumerate() {
            m_cov[(pos(i), pos(j))] = prev.p[(a_, b_)];
        }
    }
    for i in support.iter() {
        m_cov[(pos(i), pos(i))] += params.sigma_sys2;
    }
    let mut x = prev.xhat.clone();
    let p = kf_update(&mut x, &idx, &m_cov, y, a, params.sigma_obs2)?;
    Ok(KfState { t: prev.t + 1, xhat: x, support, cov_index: idx, p })
}

/// Random-walk Kalman filter on every index followed by `pm_iters - 1`
/// pseudo-measurement steps pulling `sign(x)' x` towards zero.
pub fn step_pm_cs_kf(prev: &KfState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<KfState> {
    let m = a.ncols();
    if params.pm_iters == 0 {
        return Err(Error::InvalidParameter("PM-CS-KF needs at least one iteration".into()));
    }
    let full: Vec<usize> = (0..m).collect();
    let mut m_cov = if prev.cov_index == full { prev.p.clone() } else { prev.covariance() };
    for i in 0..m {
        m_cov[(i, i)] += params.sigma_sys2;
    }
    let mut x = prev.xhat.clone();
    let mut p = kf_update(&mut x, &full, &m_cov, y, a, params.sigma_obs2)?;
    for _ in 1..params.pm_iters {
        let h = DVector::from_iterator(m, x.iter().map(|&v| linalg::sign(v)));
        if h.iter().all(|&v| v == 0.0) {
            break;
        }
        let ph = &p * &h;
        let mut s = h.dot(&ph) + params.r_eps;
        if !(s > 0.0) {
            s = f64::EPSILON * p.amax().max(1.0);
        }
        let k = ph / s;
        let hx = h.dot(&x);
        x -= &k * hx;
        // (I - k h') P = P - k (P h)'.
        let kp = &k * (&p * &h).transpose();
        p -= kp;
        symmetrize(&mut p);
    }
    let support = threshold_simple(&x, params.alpha());
    Ok(KfState { t: prev.t + 1, xhat: x, support, cov_index: full, p })
}
