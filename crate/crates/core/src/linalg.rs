//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Columns of `a` listed in `idx`, in that order.
pub fn columns(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])])
}

/// Entries of `v` listed in `idx`.
pub fn gather(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Length-`m` vector with `vals` placed at `idx`.
pub fn scatter(m: usize, idx: &[usize], vals: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(m);
    for (k, &i) in idx.iter().enumerate() {
        out[i] = vals[k];
    }
    out
}

/// Submatrix `g[rows, cols]`.
pub fn submatrix(g: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| g[(rows[r], cols[c])])
}

pub fn norm_inf(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm1(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Induced infinity norm: maximum absolute row sum.
pub fn induced_inf(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|r| a.row(r).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Induced 1-norm: maximum absolute column sum.
pub fn induced_one(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|c| a.column(c).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Exact spectral norm via the SVD.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Smallest singular value (zero for a matrix with more columns than rows).
pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return f64::INFINITY;
    }
    if a.ncols() > a.nrows() {
        return 0.0;
    }
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Spectral norm estimate by power iteration on `A'A`.
pub fn power_norm(a: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let m = a.ncols();
    if m == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // Deterministic, non-degenerate start.
    let mut v = DVector::from_fn(m, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = a.tr_mul(&(a * &v));
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        v = w / nw;
        let new = nw.sqrt();
        if (new - est).abs() <= tol * new {
            return new;
        }
        est = new;
    }
    est
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn sym_extreme_eigs(g: &DMatrix<f64>) -> (f64, f64) {
    if g.nrows() == 0 {
        return (1.0, 1.0);
    }
    let e = g.clone().symmetric_eigen();
    let lo = e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = e.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Moore-Penrose pseudo-inverse with relative singular-value cutoff `rtol`.
pub fn pinv(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cut = rtol * smax;
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// Least-squares solution of `a x = b`, minimum norm when rank deficient.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.ncols() <= a.nrows() {
        let g = a.tr_mul(a);
        if let Some(ch) = g.clone().cholesky() {
            let x = ch.solve(&a.tr_mul(b));
            // Cholesky on the normal equations is only trusted when the Gram matrix is well conditioned.
            let (lo, hi) = sym_extreme_eigs(&g);
            if lo > 1e-10 * hi {
                return x;
            }
        }
    }
    pinv(a, 1e-12) * b
}

/// Solve a symmetric positive (semi)definite system, falling back to the pseudo-inverse.
pub fn solve_spd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    if h.nrows() == 0 {
        return DVector::zeros(0);
    }
    if let Some(ch) = h.clone().cholesky() {
        let x = ch.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    pinv(h, 1e-13) * rhs
}

/// Binomial coefficient as a float (exact for the ranges used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r.round()
}

/// Lexicographic k-subsets of `0..n`.
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Combinations { n, idx: (0..k).collect(), done: k > n }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!("{what}: expected length {want}, got {got}")));
    }
    Ok(())
}
