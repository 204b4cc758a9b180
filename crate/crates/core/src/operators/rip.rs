use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{RipReport, SupportSet};
use crate::error::{Error, Result};
use crate::linalg::{self, binomial, Combinations};

/// Largest number of subsets any brute-force routine will enumerate.
pub const SUBSET_LIMIT: f64 = 1e7;

fn guard(count: f64) -> Result<()> {
    if count > SUBSET_LIMIT {
        return Err(Error::TooManySubsets { count, limit: SUBSET_LIMIT });
    }
    Ok(())
}

fn ric_from_gram(g: &DMatrix<f64>, s: usize) -> f64 {
    let mut delta: f64 = 0.0;
    for sub in Combinations::new(g.nrows(), s) {
        let (lo, hi) = linalg::sym_extreme_eigs(&linalg::submatrix(g, &sub, &sub));
        delta = delta.max(hi - 1.0).max(1.0 - lo);
    }
    delta
}

/// Exact order-`s` restricted isometry constant by enumerating all supports.
pub fn ric_bruteforce(a: &DMatrix<f64>, s: usize) -> Result<RipReport> {
    let m = a.ncols();
    if s > m {
        return Err(Error::InvalidParameter(format!("order {s} exceeds column count {m}")));
    }
    guard(binomial(m, s))?;
    let g = a.tr_mul(a);
    Ok(RipReport { s, delta: ric_from_gram(&g, s), theta: None, exact: true })
}

/// Exact `(s, s2)` restricted orthogonality constant, reported in `theta`.
/// `delta` carries the order-`s + s2` isometry constant.
pub fn roc_bruteforce(a: &DMatrix<f64>, s: usize, s2: usize) -> Result<RipReport> {
    let m = a.ncols();
    if s + s2 > m {
        return Err(Error::InvalidParameter(format!("orders {s}+{s2} exceed column count {m}")));
    }
    guard(binomial(m, s) * binomial(m - s, s2) + binomial(m, s + s2))?;
    let g = a.tr_mul(a);
    let mut theta: f64 = 0.0;
    for t1 in Combinations::new(m, s) {
        let rest: Vec<usize> = (0..m).filter(|i| t1.binary_search(i).is_err()).collect();
        for pick in Combinations::new(rest.len(), s2) {
            let t2: Vec<usize> = pick.iter().map(|&k| rest[k]).collect();
            theta = theta.max(linalg::spectral_norm(&linalg::submatrix(&g, &t1, &t2)));
        }
    }
    Ok(RipReport { s: s + s2, delta: ric_from_gram(&g, s + s2), theta: Some(theta), exact: true })
}

/// Partial isometry constant: worst order-`u` constant of `P_{T,perp} A_{T^c}` over all `|T| = k`.
pub fn partial_ric_bruteforce(a: &DMatrix<f64>, k: usize, u: usize) -> Result<RipReport> {
    let (n, m) = a.shape();
    if k + u > m {
        return Err(Error::InvalidParameter(format!("k+u = {} exceeds column count {m}", k + u)));
    }
    guard(binomial(m, k) * binomial(m - k, u))?;
    let mut delta: f64 = 0.0;
    for t in Combinations::new(m, k) {
        let at = linalg::columns(a, &t);
        let pinv = super::pseudo_inverse_on_support(a, &SupportSet::new(t.iter().copied()))?;
        let proj = DMatrix::<f64>::identity(n, n) - &at * pinv;
        let rest: Vec<usize> = (0..m).filter(|i| t.binary_search(i).is_err()).collect();
        let b = proj * linalg::columns(a, &rest);
        delta = delta.max(ric_from_gram(&b.tr_mul(&b), u));
    }
    Ok(RipReport { s: u, delta, theta: None, exact: true })
}

#[derive(Clone, Debug)]
pub struct NspReport {
    pub falsified: bool,
    pub witness: Option<DVector<f64>>,
    /// Largest observed `||v_S||_1 / ||v||_1` over the top-`s` entries.
    pub worst_ratio: f64,
    /// True when the null space is one-dimensional, so the check is exhaustive.
    pub exact: bool,
}

fn top_ratio(v: &DVector<f64>, s: usize) -> f64 {
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|x, y| y.total_cmp(x));
    let total: f64 = mags.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    mags.iter().take(s).sum::<f64>() / total
}

/// Searches for a null-space vector violating the order-`s` null space property.
pub fn nsp_falsify(a: &DMatrix<f64>, s: usize, samples: usize, seed: u64) -> Result<NspReport> {
    let m = a.ncols();
    let eig = a.tr_mul(a).symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = 1e-10 * top.max(1e-300) * m as f64;
    let basis: Vec<DVector<f64>> = (0..m)
        .filter(|&i| eig.eigenvalues[i] <= tol)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if basis.is_empty() {
        return Err(Error::TrivialNullSpace);
    }
    let exact = basis.len() == 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = NspReport { falsified: false, witness: None, worst_ratio: 0.0, exact };
    let draws = if exact { 1 } else { samples.max(1) };
    for _ in 0..draws {
        let v = if exact {
            basis[0].clone()
        } else {
            let mut v = DVector::zeros(m);
            for b in &basis {
                let c: f64 = StandardNormal.sample(&mut rng);
                v += b * c;
            }
            v
        };
        let r = top_ratio(&v, s);
        if r > report.worst_ratio {
            report.worst_ratio = r;
            if r >= 0.5 {
                report.falsified = true;
                report.witness = Some(v);
            }
        }
    }
    Ok(report)
}
