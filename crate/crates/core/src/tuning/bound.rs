//! Computable error bound for reg-mod-BPDN that holds without sufficient
//! conditions, and the `gamma` that realises it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::SupportSet;

/// Norms of the measurement noise (or of a proxy for it).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct NoiseNorms {
    pub l2: f64,
    pub linf: f64,
}

impl NoiseNorms {
    pub fn of(w: &DVector<f64>) -> Self {
        NoiseNorms { l2: w.norm(), linf: linalg::norm_inf(w) }
    }
}

/// Every quantity entering the bound for one sparsified set `Δ̃ = Δ̃*(k)`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundTerms {
    pub k: usize,
    pub feasible: bool,
    /// Why the set is infeasible, when it is.
    pub reason: Option<String>,
    pub erc: f64,
    pub maxcor: f64,
    pub f: [f64; 4],
    pub g: [f64; 4],
    pub gamma_star: f64,
    /// `g_lambda(Δ̃)`, or infinity when infeasible.
    pub bound: f64,
}

impl BoundTerms {
    fn infeasible(k: usize, reason: String) -> Self {
        BoundTerms {
            k,
            feasible: false,
            reason: Some(reason),
            erc: f64::NAN,
            maxcor: f64::NAN,
            f: [f64::NAN; 4],
            g: [f64::NAN; 4],
            gamma_star: f64::INFINITY,
            bound: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub lambda: f64,
    /// Chosen sparsified-set size (0 when nothing is feasible).
    pub k_min: usize,
    pub delta_u: SupportSet,
    pub delta_tilde_star: SupportSet,
    pub gamma_star: f64,
    pub bound: f64,
    pub erc: f64,
    pub maxcor: f64,
    pub f: [f64; 4],
    pub g: [f64; 4],
    pub feasible: bool,
    pub per_k: Vec<BoundTerms>,
}

/// Inverse of a symmetric positive semi-definite matrix, `None` when it is
/// numerically singular.
fn psd_inverse(h: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if h.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let (lo, hi) = linalg::sym_extreme_eigs(h);
    if !(lo > 1e-12 * hi.max(1e-300)) {
        return None;
    }
    let inv = h.clone().cholesky()?.inverse();
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

fn check_unit_columns(a: &DMatrix<f64>) -> Result<()> {
    for (j, c) in a.column_iter().enumerate() {
        let n = c.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "column {j} has norm {n:.6}; the bound needs unit-norm columns"
            )));
        }
    }
    Ok(())
}

/// Indices of `delta_u` sorted by decreasing `|x_i|` (ties by index).
fn by_magnitude(x: &DVector<f64>, delta_u: &SupportSet) -> Vec<usize> {
    let mut order: Vec<usize> = delta_u.indices().to_vec();
    order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    order
}

struct Shared<'a> {
    a: &'a DMatrix<f64>,
    t: &'a [usize],
    lambda: f64,
    /// `(A_T'A_T + lambda I)^{-1}`, `None` when singular.
    gt_inv: Option<DMatrix<f64>>,
    /// `M = I - A_T (A_T'A_T + lambda I)^{-1} A_T'`.
    m_proj: Option<DMatrix<f64>>,
    prior_err: f64,
    noise: NoiseNorms,
}

fn terms_for(sh: &Shared, x: &DVector<f64>, order: &[usize], k: usize) -> BoundTerms {
    let a = sh.a;
    let m = a.ncols();
    let (Some(gt_inv), Some(mp)) = (&sh.gt_inv, &sh.m_proj) else {
        return BoundTerms::infeasible(k, "A_T'A_T + lambda I is singular".into());
    };
    let s: Vec<usize> = order[..k].to_vec();
    let rest: Vec<usize> = order[k..].to_vec();
    // T first, then S: the lambda block sits on the leading |T| diagonal entries.
    let u: Vec<usize> = sh.t.iter().chain(s.iter()).copied().collect();
    let mut in_u = vec![false; m];
    for &i in &u {
        in_u[i] = true;
    }
    let outside: Vec<usize> = (0..m).filter(|&i| !in_u[i]).collect();

    let a_u = linalg::columns(a, &u);
    let a_s = linalg::columns(a, &s);
    let a_out = linalg::columns(a, &outside);

    let mut q = a_u.tr_mul(&a_u);
    for d in 0..sh.t.len() {
        q[(d, d)] += sh.lambda;
    }
    let Some(q_inv) = psd_inverse(&q) else {
        return BoundTerms::infeasible(k, "Q is singular".into());
    };
    let ms = mp * &a_s;
    let Some(p) = psd_inverse(&a_s.tr_mul(&ms)) else {
        return BoundTerms::infeasible(k, "A_S' M A_S is singular".into());
    };

    let max_l1 = if k == 0 || outside.is_empty() {
        0.0
    } else {
        linalg::induced_one(&(&p * ms.tr_mul(&a_out)))
    };
    let erc = 1.0 - max_l1;
    if !(erc > 0.0) {
        let mut bt = BoundTerms::infeasible(k, format!("ERC = {erc:.4} is not positive"));
        bt.erc = erc;
        return bt;
    }
    let maxcor = if outside.is_empty() {
        0.0
    } else {
        let c = a_out.tr_mul(&a_u);
        (0..c.nrows()).map(|r| c.row(r).norm()).fold(0.0, f64::max)
    };

    let a_t = linalg::columns(a, sh.t);
    let lead = gt_inv * a_t.tr_mul(&a_s) * &p;
    let p2 = linalg::spectral_norm(&p);
    let f1 = (linalg::spectral_norm(&lead).powi(2) + p2 * p2).sqrt();
    let f2 = linalg::spectral_norm(&q_inv);
    let qa = &q_inv * a_u.transpose();
    let f3 = linalg::spectral_norm(&qa);
    let a_rest = linalg::columns(a, &rest);
    let f4 = (linalg::spectral_norm(&(&qa * &a_rest)).powi(2) + 1.0).sqrt();

    let rk = (k as f64).sqrt();
    let lam = sh.lambda;
    let w = sh.noise;
    let g1 = lam * f2 * (rk * f1 * maxcor / erc + 1.0);
    let g2 = rk * f1 * f3 * maxcor / erc + f3;
    let g3 = rk * f1 * f4 * maxcor / erc + f4;
    let g4 = rk * linalg::induced_inf(&a_out) * w.linf * f1 / erc;

    let miss = rest.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
    let gamma_star = maxcor / erc * (lam * f2 * sh.prior_err + f3 * w.l2 + f4 * miss) + w.linf / erc;
    let bound = g1 * sh.prior_err + g2 * w.l2 + g3 * miss + g4;
    BoundTerms {
        k,
        feasible: true,
        reason: None,
        erc,
        maxcor,
        f: [f1, f2, f3, f4],
        g: [g1, g2, g3, g4],
        gamma_star,
        bound,
    }
}

/// Error bound for reg-mod-BPDN with prior support `t`, prior values `mu_hat`
/// and weight `lambda`, for a signal `x` (support taken as its nonzeros).
///
/// Scans every `k = 0..=|Δu|` with `Δ̃*(k)` the `k` largest entries of `x`
/// on `Δu = supp(x) \ T` and returns the `k` with the smallest bound.
pub fn compute_bound(
    a: &DMatrix<f64>,
    x: &DVector<f64>,
    t: &SupportSet,
    mu_hat: &DVector<f64>,
    lambda: f64,
    noise: NoiseNorms,
) -> Result<BoundReport> {
    let (n, m) = a.shape();
    if x.len() != m || mu_hat.len() != m {
        return Err(Error::Dimension(format!("x/mu_hat lengths {}/{} for {m} columns", x.len(), mu_hat.len())));
    }
    t.check_within(m)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda = {lambda}")));
    }
    if !(noise.l2 >= 0.0 && noise.linf >= 0.0) || !noise.l2.is_finite() || !noise.linf.is_finite() {
        return Err(Error::InvalidParameter("noise norms must be finite and non-negative".into()));
    }
    check_unit_columns(a)?;

    let delta_u = SupportSet::of_nonzeros(x).difference(t);
    let order = by_magnitude(x, &delta_u);
    let a_t = linalg::columns(a, t.indices());
    let mut gt = a_t.tr_mul(&a_t);
    for d in 0..t.len() {
        gt[(d, d)] += lambda;
    }
    let gt_inv = psd_inverse(&gt);
    let m_proj = gt_inv.as_ref().map(|gi| DMatrix::<f64>::identity(n, n) - &a_t * gi * a_t.transpose());
    let prior_err = t.iter().map(|i| (x[i] - mu_hat[i]).powi(2)).sum::<f64>().sqrt();
    let sh = Shared { a, t: t.indices(), lambda, gt_inv, m_proj, prior_err, noise };

    let per_k: Vec<BoundTerms> =
        (0..=order.len()).into_par_iter().map(|k| terms_for(&sh, x, &order, k)).collect();
    let best = per_k
        .iter()
        .filter(|b| b.feasible)
        .min_by(|p, q| p.bound.total_cmp(&q.bound).then(p.k.cmp(&q.k)))
        .cloned();

    Ok(match best {
        Some(b) => BoundReport {
            lambda,
            k_min: b.k,
            delta_tilde_star: SupportSet::new(order[..b.k].iter().copied()),
            delta_u,
            gamma_star: b.gamma_star,
            bound: b.bound,
            erc: b.erc,
            maxcor: b.maxcor,
            f: b.f,
            g: b.g,
            feasible: true,
            per_k,
        },
        None => BoundReport {
            lambda,
            k_min: 0,
            delta_tilde_star: SupportSet::empty(),
            delta_u,
            gamma_star: f64::INFINITY,
            bound: f64::INFINITY,
            erc: f64::NAN,
            maxcor: f64::NAN,
            f: [f64::NAN; 4],
            g: [f64::NAN; 4],
            feasible: false,
            per_k,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::gaussian_matrix;
    use crate::solvers::{reg_mod_bpdn, PriorKnowledge, Problem, SolverOptions};

    fn orthonormal(m: usize) -> DMatrix<f64> {
        DMatrix::identity(m, m)
    }

    #[test]
    fn identity_matrix_gives_closed_form_terms() {
        // With A = I every cross term vanishes: ERC = 1, maxcor = 0,
        // Q^{-1} = diag(1/(1+lambda) on T, 1 on S).
        let a = orthonormal(6);
        let x = DVector::from_vec(vec![3.0, -2.0, 0.0, 1.5, 0.0, 0.0]);
        let t = SupportSet::new([0, 1]);
        let mu = DVector::from_vec(vec![2.5, -2.0, 0.0, 0.0, 0.0, 0.0]);
        let lam = 0.5;
        let noise = NoiseNorms { l2: 0.1, linf: 0.05 };
        let r = compute_bound(&a, &x, &t, &mu, lam, noise).unwrap();
        assert!(r.feasible);
        assert_eq!(r.delta_u, SupportSet::new([3]));
        let k1 = &r.per_k[1];
        assert_eq!(k1.erc, 1.0);
        assert_eq!(k1.maxcor, 0.0);
        // f1 = ||P|| = 1; f2 = 1; f3 = ||Q^{-1}A_U'|| = 1; f4 = 1; g4 = 1 * ||A_out||_inf * linf.
        assert!((k1.f[0] - 1.0).abs() < 1e-12);
        assert!((k1.f[1] - 1.0).abs() < 1e-12);
        assert!((k1.f[2] - 1.0).abs() < 1e-12);
        assert!((k1.f[3] - 1.0).abs() < 1e-12);
        let want = lam * 1.0 * 0.5 + 0.1 + 0.0 + 1.0 * 0.05;
        assert!((k1.bound - want).abs() < 1e-12, "{} vs {want}", k1.bound);
        assert!((k1.gamma_star - 0.05).abs() < 1e-12);
        // k = 0 leaves x_3 = 1.5 missed; k = 1 must win.
        assert_eq!(r.k_min, 1);
    }

    #[test]
    fn non_unit_columns_are_rejected() {
        let a = DMatrix::from_element(3, 2, 1.0);
        let x = DVector::zeros(2);
        let e = compute_bound(&a, &x, &SupportSet::empty(), &x, 0.1, NoiseNorms { l2: 0.0, linf: 0.0 });
        assert!(matches!(e, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn singular_prior_block_with_zero_lambda_is_infeasible() {
        // Duplicate columns inside T make A_T'A_T singular at lambda = 0.
        let mut a = gaussian_matrix(8, 10, 4, true);
        let c0 = a.column(0).clone_owned();
        a.set_column(1, &c0);
        let mut x = DVector::zeros(10);
        x[0] = 1.0;
        x[5] = 1.0;
        let t = SupportSet::new([0, 1]);
        let r = compute_bound(&a, &x, &t, &DVector::zeros(10), 0.0, NoiseNorms { l2: 0.0, linf: 0.0 }).unwrap();
        assert!(!r.feasible);
        assert!(r.per_k.iter().all(|b| b.bound.is_infinite()));
        let r = compute_bound(&a, &x, &t, &DVector::zeros(10), 0.1, NoiseNorms { l2: 0.0, linf: 0.0 }).unwrap();
        assert!(r.per_k[0].feasible);
    }

    #[test]
    fn scan_covers_every_k() {
        let a = gaussian_matrix(20, 40, 7, true);
        let x = DVector::from_fn(40, |i, _| if i < 6 { 1.0 + i as f64 } else { 0.0 });
        let t = SupportSet::new([0, 1, 2]);
        let r = compute_bound(&a, &x, &t, &x.clone().map(|v| v * 0.9), 0.1, NoiseNorms { l2: 0.01, linf: 0.005 })
            .unwrap();
        assert_eq!(r.per_k.len(), 4);
        assert_eq!(r.per_k.iter().map(|b| b.k).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        if r.feasible {
            let min = r.per_k.iter().map(|b| b.bound).fold(f64::INFINITY, f64::min);
            assert_eq!(r.bound, min);
            // Δ̃* holds the largest entries of x on Δu first.
            assert!(r.delta_tilde_star.iter().all(|i| i >= 6 - r.k_min));
        }
    }

    #[test]
    fn empty_prior_reduces_to_plain_bpdn_terms() {
        // T = ∅: M = I, lambda plays no role, and f1 = ||(A_S'A_S)^{-1}||.
        let a = gaussian_matrix(30, 50, 11, true);
        let mut x = DVector::zeros(50);
        x[3] = 2.0;
        x[17] = -1.0;
        let noise = NoiseNorms { l2: 0.02, linf: 0.01 };
        let r1 = compute_bound(&a, &x, &SupportSet::empty(), &DVector::zeros(50), 0.3, noise).unwrap();
        let r2 = compute_bound(&a, &x, &SupportSet::empty(), &DVector::zeros(50), 0.0001, noise).unwrap();
        assert_eq!(r1.bound, r2.bound);
        let k2 = &r1.per_k[2];
        let a_s = linalg::columns(&a, &[3, 17]);
        let p = a_s.tr_mul(&a_s).try_inverse().unwrap();
        assert!((k2.f[0] - linalg::spectral_norm(&p)).abs() < 1e-10);
        assert!((k2.f[1] - k2.f[0]).abs() < 1e-10);
    }

    #[test]
    fn reg_mod_bpdn_error_respects_bound_on_seeded_instances() {
        let (n, m) = (40, 60);
        let opts = SolverOptions::default();
        let mut checked = 0;
        for seed in 0..12u64 {
            let a = gaussian_matrix(n, m, 500 + seed, true);
            let mut x = DVector::zeros(m);
            for (j, i) in [2usize, 9, 15, 22, 31, 44].iter().enumerate() {
                x[*i] = if j % 2 == 0 { 2.0 + j as f64 * 0.3 } else { -1.5 - j as f64 * 0.2 };
            }
            let t = SupportSet::new([2, 9, 15, 22, 50]);
            let mu = DVector::from_fn(m, |i, _| if t.contains(i) { x[i] * 0.95 } else { 0.0 });
            let w = crate::simulation::add_noise(&DVector::zeros(n), 1e-4, 900 + seed);
            let y = &a * &x + &w;
            let r = compute_bound(&a, &x, &t, &mu, 0.1, NoiseNorms::of(&w)).unwrap();
            if !r.feasible {
                continue;
            }
            checked += 1;
            let p = Problem::new(&a, &y).unwrap();
            let pk = PriorKnowledge { t: t.clone(), mu_hat: mu.clone(), tau: 0.0, lambda: 0.1, gamma: r.gamma_star };
            let xhat = reg_mod_bpdn(&p, &pk, &opts).unwrap().xhat;
            let err = (&xhat - &x).norm();
            assert!(err <= r.bound, "seed {seed}: error {err} above bound {}", r.bound);
        }
        assert!(checked >= 6, "only {checked} feasible instances");
    }
}
