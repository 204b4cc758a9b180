//! Weak threshold for weighted-l1 (and its modified-CS / BP special cases):
//! the smallest measurement fraction `n/m` above which exact recovery fails
//! with exponentially small probability.
//!
//! The exponents are evaluated on a uniform `(tau1, tau2)` grid; the two
//! implicit scalar equations are solved by bisection after expanding a
//! bracket.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};

/// Weight ratio used in place of an infinite `omega`.
const OMEGA_MAX: f64 = 1e6;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakThresholdQuery {
    /// `|T| / m`
    pub gamma1: f64,
    /// `|T^c| / m`
    pub gamma2: f64,
    /// Fraction of `T` that is in the support.
    pub p1: f64,
    /// Fraction of `T^c` that is in the support.
    pub p2: f64,
    /// `1 / tau`; `f64::INFINITY` for modified-CS.
    pub omega: f64,
    /// Points per axis of the `(tau1, tau2)` grid.
    pub grid: usize,
    /// Number of steps of the `delta` grid on `[0, 1]`.
    pub delta_steps: usize,
    /// Relative tolerance of the scalar root solves.
    pub tol: f64,
}

impl Default for WeakThresholdQuery {
    fn default() -> Self {
        WeakThresholdQuery { gamma1: 0.0, gamma2: 1.0, p1: 0.0, p2: 0.1, omega: 1.0, grid: 64, delta_steps: 200, tol: 1e-12 }
    }
}

impl WeakThresholdQuery {
    /// Plain BP: no prior support.
    pub fn bp(p2: f64) -> Self {
        WeakThresholdQuery { p2, ..Default::default() }
    }

    pub fn with_resolution(mut self, grid: usize, delta_steps: usize) -> Self {
        self.grid = grid;
        self.delta_steps = delta_steps;
        self
    }

    fn validate(&self) -> Result<()> {
        let frac = |v: f64| (0.0..=1.0).contains(&v);
        if !(frac(self.gamma1) && frac(self.gamma2) && frac(self.p1) && frac(self.p2)) {
            return Err(Error::InvalidParameter("gamma1, gamma2, p1, p2 must lie in [0, 1]".into()));
        }
        if (self.gamma1 + self.gamma2 - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "gamma1 + gamma2 = {} must equal 1",
                self.gamma1 + self.gamma2
            )));
        }
        if !(self.omega >= 1.0) {
            return Err(Error::InvalidParameter(format!("omega = {} must be at least 1", self.omega)));
        }
        if self.grid < 2 || self.delta_steps < 1 {
            return Err(Error::InvalidParameter("grid needs at least 2 points per axis".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(())
    }

    fn omega_eff(&self) -> f64 {
        self.omega.min(OMEGA_MAX)
    }
}

/// `g(x) = 2/sqrt(pi) exp(-x^2)`
fn g(x: f64) -> f64 {
    std::f64::consts::FRAC_2_SQRT_PI * (-x * x).exp()
}

/// `g(x) / G(x)` with `G = erf`, stable near zero.
fn g_over_big_g(x: f64) -> f64 {
    if x < 1e-4 {
        // erf(x) = 2x/sqrt(pi) (1 - x^2/3 + ...)
        (-x * x).exp() / (x * (1.0 - x * x / 3.0))
    } else {
        g(x) / erf(x)
    }
}

fn ln_big_g(x: f64) -> f64 {
    if x < 1e-4 {
        (std::f64::consts::FRAC_2_SQRT_PI * x).ln() + (1.0 - x * x / 3.0).ln()
    } else if x > 5.0 {
        (-erfc(x)).ln_1p()
    } else {
        erf(x).ln()
    }
}

fn phi(s: f64) -> f64 {
    (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `Phi(s) / phi(s)` for `s <= -5` by the Mills-ratio continued fraction.
fn mills_lower(s: f64) -> f64 {
    let x = -s;
    let mut f = x;
    for k in (1..=60).rev() {
        f = x + k as f64 / f;
    }
    1.0 / f
}

/// `phi(s) / Phi(s)`.
fn phi_ratio(s: f64) -> f64 {
    if s > -5.0 {
        phi(s) / (0.5 * erfc(-s / std::f64::consts::SQRT_2))
    } else {
        1.0 / mills_lower(s)
    }
}

fn ln_big_phi(s: f64) -> f64 {
    if s > -5.0 {
        (0.5 * erfc(-s / std::f64::consts::SQRT_2)).ln()
    } else {
        -0.5 * s * s - 0.5 * (2.0 * std::f64::consts::PI).ln() + mills_lower(s).ln()
    }
}

/// `Lambda_1(s) = s^2/2 + log(2 Phi(s))`.
fn lambda1(s: f64) -> f64 {
    0.5 * s * s + std::f64::consts::LN_2 + ln_big_phi(s)
}

/// Binary entropy in bits with `H(0) = H(1) = 0`; the `log 2` factor of the
/// combinatorial exponent converts it to nats like the angle exponents.
fn entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Bisection for an increasing `f` on `(lo, hi)`, given a bracketing sign change.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol * hi.abs().max(lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// The three exponents at one grid point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PsiTerms {
    pub tau1: f64,
    pub tau2: f64,
    pub com: f64,
    pub int: f64,
    pub ext: f64,
}

impl PsiTerms {
    /// `psi_com - psi_int - psi_ext`
    pub fn net(&self) -> f64 {
        self.com - self.int - self.ext
    }
}

fn psi_com(q: &WeakThresholdQuery, t1: f64, t2: f64) -> f64 {
    let r1 = q.gamma1 * (1.0 - q.p1);
    let r2 = q.gamma2 * (1.0 - q.p2);
    let h1 = if r1 > 0.0 { r1 * entropy(t1 / r1) } else { 0.0 };
    let h2 = if r2 > 0.0 { r2 * entropy(t2 / r2) } else { 0.0 };
    (h1 + h2 + t1 + t2) * std::f64::consts::LN_2
}

fn psi_ext(q: &WeakThresholdQuery, t1: f64, t2: f64) -> Result<f64> {
    let w = q.omega_eff();
    let c = (t1 + q.gamma1 * q.p1) + w * w * (t2 + q.gamma2 * q.p2);
    let a1 = (q.gamma1 * (1.0 - q.p1) - t1).max(0.0);
    let a2 = (q.gamma2 * (1.0 - q.p2) - t2).max(0.0);
    let value = |x: f64| c * x * x - a1 * ln_big_g(x) - a2 * ln_big_g(w * x);
    if a1 == 0.0 && a2 == 0.0 {
        // Minimum of c x^2 at x = 0.
        return Ok(0.0);
    }
    if c == 0.0 {
        // Minimum at infinity, where log G vanishes.
        return Ok(0.0);
    }
    // Stationarity of `value`, divided by x: increasing from -inf to 2c.
    let h = |x: f64| 2.0 * c - a1 * g_over_big_g(x) / x - a2 * w * g_over_big_g(w * x) / x;
    let (mut lo, mut hi) = (1e-3, 1.0);
    let mut n = 0;
    while h(lo) >= 0.0 {
        lo *= 0.1;
        n += 1;
        if n > 300 || lo == 0.0 {
            return Err(Error::Numerical(format!("external-angle root not bracketed below at tau = ({t1}, {t2})")));
        }
    }
    n = 0;
    while h(hi) < 0.0 {
        hi *= 2.0;
        n += 1;
        if n > 200 {
            return Err(Error::Numerical(format!("external-angle root not bracketed above at tau = ({t1}, {t2})")));
        }
    }
    let x0 = bisect(h, lo, hi, q.tol);
    Ok(value(x0))
}

fn psi_int(q: &WeakThresholdQuery, t1: f64, t2: f64) -> Result<f64> {
    let sum = t1 + t2;
    if sum == 0.0 {
        return Ok(0.0);
    }
    let w = q.omega_eff();
    let omega_p = q.gamma1 * q.p1 + w * w * q.gamma2 * q.p2;
    if omega_p <= 0.0 {
        // The quadratic term blows up: the internal-angle exponent is infinite.
        return Ok(f64::INFINITY);
    }
    let b = (t1 + w * w * t2) / sum;
    let (w1, w2) = (t1 / sum, t2 / sum);
    let qf = |s: f64| w1 * phi_ratio(s) + w * w2 * phi_ratio(w * s);
    let m_hat = |s: f64| -s / qf(s);
    let target = sum / (sum * b + omega_p);
    // m_hat rises from 0 at s = 0- to 1/b as s -> -inf; bracket on s < 0.
    let h = |s: f64| target - m_hat(s);
    let scale = 1.0 / w.max(1.0);
    let mut lo = -scale;
    let mut n = 0;
    while h(lo) >= 0.0 {
        lo *= 2.0;
        n += 1;
        if n > 200 {
            return Err(Error::Numerical(format!("internal-angle root not bracketed at tau = ({t1}, {t2})")));
        }
    }
    let mut hi = lo;
    n = 0;
    while h(hi) < 0.0 {
        hi *= 0.5;
        n += 1;
        if n > 2000 {
            return Err(Error::Numerical(format!("internal-angle root not bracketed near zero at tau = ({t1}, {t2})")));
        }
    }
    // h increases as s moves from lo toward zero.
    let s_star = bisect(|s| h(s), lo, hi, q.tol);
    let y = s_star * (b - 1.0 / m_hat(s_star));
    let rate = s_star * y - w1 * lambda1(s_star) - w2 * lambda1(w * s_star);
    Ok((rate + sum / (2.0 * omega_p) * y * y + std::f64::consts::LN_2) * sum)
}

/// Exponents at `(tau1, tau2)`.
pub fn psi_terms(q: &WeakThresholdQuery, tau1: f64, tau2: f64) -> Result<PsiTerms> {
    Ok(PsiTerms { tau1, tau2, com: psi_com(q, tau1, tau2), int: psi_int(q, tau1, tau2)?, ext: psi_ext(q, tau1, tau2)? })
}

fn axis(len: f64, points: usize) -> Vec<f64> {
    if len <= 0.0 {
        return vec![0.0];
    }
    (0..points).map(|i| len * i as f64 / (points - 1) as f64).collect()
}

/// Golden-section maximisation of `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Net exponents are treated as non-negative above `-NET_ZERO`.
const NET_ZERO: f64 = 1e-7;

/// Smallest `delta` on the `delta` grid such that the net exponent
/// `psi_com - psi_int - psi_ext` is negative at every grid point with
/// `tau1 + tau2 > delta - gamma1 p1 - gamma2 p2`.
///
/// The net exponent never exceeds zero and touches it at a single critical
/// face dimension, which a finite grid misses; the grid maximum is therefore
/// refined by coordinate-wise golden-section search and the refined point
/// joins the grid points.
pub fn weak_threshold(q: &WeakThresholdQuery) -> Result<f64> {
    q.validate()?;
    let (r1, r2) = (q.gamma1 * (1.0 - q.p1), q.gamma2 * (1.0 - q.p2));
    let ax1 = axis(r1, q.grid);
    let ax2 = axis(r2, q.grid);
    let points: Vec<(f64, f64)> = ax1.iter().flat_map(|&t1| ax2.iter().map(move |&t2| (t1, t2))).collect();
    let nets: Vec<Result<f64>> = points.par_iter().map(|&(t1, t2)| psi_terms(q, t1, t2).map(|p| p.net())).collect();
    let mut nets_ok = Vec::with_capacity(nets.len());
    for n in nets {
        nets_ok.push(n?);
    }

    let mut worst_sum = f64::NEG_INFINITY;
    for (&(t1, t2), &net) in points.iter().zip(&nets_ok) {
        if net >= -NET_ZERO {
            worst_sum = worst_sum.max(t1 + t2);
        }
    }

    let (imax, &best) = nets_ok.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("grid is non-empty");
    if best.is_finite() {
        let net_at = |t1: f64, t2: f64| psi_terms(q, t1, t2).map(|p| p.net()).unwrap_or(f64::NEG_INFINITY);
        let (mut t1, mut t2) = points[imax];
        let h1 = if ax1.len() > 1 { ax1[1] } else { 0.0 };
        let h2 = if ax2.len() > 1 { ax2[1] } else { 0.0 };
        for _ in 0..20 {
            if h2 > 0.0 {
                t2 = golden_max(|v| net_at(t1, v), (t2 - 2.0 * h2).max(0.0), (t2 + 2.0 * h2).min(r2));
            }
            if h1 > 0.0 {
                t1 = golden_max(|v| net_at(v, t2), (t1 - 2.0 * h1).max(0.0), (t1 + 2.0 * h1).min(r1));
            }
        }
        if net_at(t1, t2) >= -NET_ZERO {
            worst_sum = worst_sum.max(t1 + t2);
        }
    }

    let base = q.gamma1 * q.p1 + q.gamma2 * q.p2;
    // Violating points must fall outside the domain: tau1 + tau2 <= delta - base.
    let need = base + worst_sum;
    let steps = q.delta_steps;
    for j in 0..=steps {
        let delta = j as f64 / steps as f64;
        if delta >= need - 1e-12 {
            return Ok(delta);
        }
    }
    Ok(1.0)
}

/// `gamma1 + gamma2 delta_c(0, 1, 0, p2, 1)`: the modified-CS threshold when
/// the prior support holds no extras, computed from the BP threshold.
pub fn modcs_threshold_from_bp(gamma1: f64, p2: f64, template: &WeakThresholdQuery) -> Result<f64> {
    let bp = WeakThresholdQuery { gamma1: 0.0, gamma2: 1.0, p1: 0.0, p2, omega: 1.0, ..template.clone() };
    Ok(gamma1 + (1.0 - gamma1) * weak_threshold(&bp)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn special_functions_match_direct_forms() {
        for &s in &[-4.9, -1.0, 0.0, 2.0] {
            let big_phi = 0.5 * erfc(-s / std::f64::consts::SQRT_2);
            assert!((ln_big_phi(s) - big_phi.ln()).abs() < 1e-12);
        }
        // Continued fraction against the direct ratio where both are accurate.
        let s = -5.5;
        let direct = 0.5 * erfc(-s / std::f64::consts::SQRT_2) / phi(s);
        assert!((mills_lower(s) - direct).abs() < 1e-10 * direct);
        for &x in &[1e-5, 0.3, 2.0] {
            assert!((g_over_big_g(x) - g(x) / erf(x)).abs() < 1e-8 * g(x) / erf(x));
        }
        assert_eq!(entropy(0.0), 0.0);
        assert_eq!(entropy(1.0), 0.0);
        assert!((entropy(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn external_exponent_is_the_minimum_of_its_objective() {
        let q = WeakThresholdQuery { gamma1: 0.3, gamma2: 0.7, p1: 0.8, p2: 0.1, omega: 2.0, ..Default::default() };
        let (t1, t2) = (0.02, 0.2);
        let ext = psi_ext(&q, t1, t2).unwrap();
        let w = q.omega;
        let c = (t1 + q.gamma1 * q.p1) + w * w * (t2 + q.gamma2 * q.p2);
        let a1 = q.gamma1 * (1.0 - q.p1) - t1;
        let a2 = q.gamma2 * (1.0 - q.p2) - t2;
        let f = |x: f64| c * x * x - a1 * erf(x).ln() - a2 * erf(w * x).ln();
        let scan = (1..20000).map(|i| f(i as f64 * 1e-4)).fold(f64::INFINITY, f64::min);
        assert!(ext <= scan + 1e-9 && ext > scan - 1e-6, "{ext} vs {scan}");
    }

    #[test]
    fn internal_root_solves_its_equation() {
        let q = WeakThresholdQuery { gamma1: 0.2, gamma2: 0.8, p1: 0.9, p2: 0.05, omega: 3.0, ..Default::default() };
        let (t1, t2) = (0.01, 0.3);
        assert!(psi_int(&q, t1, t2).unwrap().is_finite());
        assert_eq!(psi_int(&q, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn empty_support_needs_no_measurements() {
        let q = WeakThresholdQuery::bp(0.0).with_resolution(32, 100);
        assert_eq!(weak_threshold(&q).unwrap(), 0.0);
    }

    #[test]
    fn bp_threshold_is_monotone_in_sparsity() {
        let mut last = 0.0;
        for &p in &[0.02, 0.05, 0.1, 0.2, 0.3] {
            let d = weak_threshold(&WeakThresholdQuery::bp(p).with_resolution(48, 200)).unwrap();
            assert!(d >= last, "p2 = {p}: {d} < {last}");
            assert!(d > p && d < 1.0);
            last = d;
        }
    }

    #[test]
    fn modcs_with_exact_prior_matches_bp_rescaling() {
        for &(g1, p2) in &[(0.1, 0.05), (0.2, 0.1), (0.05, 0.2)] {
            let q = WeakThresholdQuery {
                gamma1: g1,
                gamma2: 1.0 - g1,
                p1: 1.0,
                p2,
                omega: f64::INFINITY,
                ..Default::default()
            };
            let direct = weak_threshold(&q).unwrap();
            let via_bp = modcs_threshold_from_bp(g1, p2, &q).unwrap();
            assert!((direct - via_bp).abs() <= 2.0 / q.delta_steps as f64, "{direct} vs {via_bp}");
        }
    }

    #[test]
    fn invalid_queries_are_rejected() {
        let q = WeakThresholdQuery { gamma1: 0.5, gamma2: 0.6, ..Default::default() };
        assert!(weak_threshold(&q).is_err());
        let q = WeakThresholdQuery { omega: 0.5, ..Default::default() };
        assert!(weak_threshold(&q).is_err());
    }
}
