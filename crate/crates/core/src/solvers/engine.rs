//! Shared first-order engine for every weighted-l1 program.
//!
//! All variants reduce to `min sum_i w_i |b_i| + f(b)` where `f` is either the
//! indicator of `{Ab = y}` or `0.5 ||y - Ab||^2 + 0.5 sum_i q_i (b_i - mu_i)^2`.
//! Both are solved by over-relaxed ADMM with residual balancing. Whenever the
//! iterate's signed support settles, an active-set refit is tried and accepted
//! only if it satisfies the optimality conditions to near machine precision.
//! The ball-constrained program is solved on the Pareto curve of the
//! Lagrangian form.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{SolverOptions, SolverResult, Status};
use crate::linalg::{self, soft_threshold};

const RELAX: f64 = 1.6;
const CHECK_EVERY: usize = 10;
const ADAPT_EVERY: usize = 50;
const POLISH_TOL: f64 = 1e-9;

/// Separable quadratic prior `0.5 sum_i q_i (b_i - mu_i)^2`.
#[derive(Clone, Copy)]
pub(crate) struct Quadratic<'a> {
    pub q: &'a [f64],
    pub mu: &'a DVector<f64>,
}

fn signature(z: &DVector<f64>) -> Vec<i8> {
    z.iter().map(|v| if *v > 0.0 { 1 } else if *v < 0.0 { -1 } else { 0 }).collect()
}

fn active_set(z: &DVector<f64>, w: &[f64]) -> Vec<usize> {
    (0..z.len()).filter(|&i| z[i] != 0.0 || w[i] == 0.0).collect()
}

pub(crate) fn l1_weighted(w: &[f64], b: &DVector<f64>) -> f64 {
    w.iter().zip(b.iter()).map(|(wi, bi)| wi * bi.abs()).sum()
}

/// Largest violation of `-g_i in w_i d|b_i|`.
fn subgradient_violation(g: &DVector<f64>, w: &[f64], b: &DVector<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..b.len() {
        let v = if b[i] != 0.0 {
            (g[i] + w[i] * linalg::sign(b[i])).abs()
        } else {
            (g[i].abs() - w[i]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

// ---------------------------------------------------------------- Lagrangian

struct LagrangeSystem {
    wide: bool,
    dinv: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl LagrangeSystem {
    fn factor(a: &DMatrix<f64>, gram: Option<&DMatrix<f64>>, d: &DVector<f64>) -> Option<Self> {
        let (n, m) = a.shape();
        let dinv = d.map(|v| 1.0 / v);
        if n <= m {
            let mut ad = a.clone();
            for j in 0..m {
                ad.column_mut(j).scale_mut(dinv[j]);
            }
            let k = DMatrix::identity(n, n) + ad * a.transpose();
            Some(LagrangeSystem { wide: true, dinv, chol: k.cholesky()? })
        } else {
            let mut h = gram.cloned().unwrap_or_else(|| a.tr_mul(a));
            for j in 0..m {
                h[(j, j)] += d[j];
            }
            Some(LagrangeSystem { wide: false, dinv, chol: h.cholesky()? })
        }
    }

    fn solve(&self, a: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
        if self.wide {
            let dr = r.component_mul(&self.dinv);
            let t = self.chol.solve(&(a * &dr));
            dr - a.tr_mul(&t).component_mul(&self.dinv)
        } else {
            self.chol.solve(r)
        }
    }
}

#[derive(Clone, Copy)]
pub(crate) struct LagrangeProblem<'a> {
    pub a: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    pub w: &'a [f64],
    pub quad: Option<Quadratic<'a>>,
}

impl<'a> LagrangeProblem<'a> {
    fn gradient(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut g = self.a.tr_mul(&(self.a * b - self.y));
        if let Some(qd) = self.quad {
            for i in 0..b.len() {
                g[i] += qd.q[i] * (b[i] - qd.mu[i]);
            }
        }
        g
    }

    fn scale(&self) -> f64 {
        let mut s = linalg::norm_inf(&self.a.tr_mul(self.y));
        if let Some(qd) = self.quad {
            for i in 0..qd.q.len() {
                s = s.max((qd.q[i] * qd.mu[i]).abs());
            }
        }
        s.max(self.w.iter().copied().fold(0.0, f64::max)).max(1e-300)
    }

    pub fn objective(&self, b: &DVector<f64>) -> f64 {
        let mut f = 0.5 * (self.y - self.a * b).norm_squared() + l1_weighted(self.w, b);
        if let Some(qd) = self.quad {
            for i in 0..b.len() {
                f += 0.5 * qd.q[i] * (b[i] - qd.mu[i]).powi(2);
            }
        }
        f
    }

    pub fn kkt(&self, b: &DVector<f64>) -> f64 {
        subgradient_violation(&self.gradient(b), self.w, b) / self.scale()
    }

    /// Exact minimiser on the signed active set of `z`, if it is optimal.
    fn polish(&self, z: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
        let s = active_set(z, self.w);
        let m = z.len();
        let b = if s.is_empty() {
            DVector::zeros(m)
        } else {
            let as_ = linalg::columns(self.a, &s);
            let mut h = as_.tr_mul(&as_);
            let mut rhs = as_.tr_mul(self.y);
            for (k, &i) in s.iter().enumerate() {
                rhs[k] -= self.w[i] * linalg::sign(z[i]);
                if let Some(qd) = self.quad {
                    h[(k, k)] += qd.q[i];
                    rhs[k] += qd.q[i] * qd.mu[i];
                }
            }
            linalg::scatter(m, &s, &linalg::solve_spd(&h, &rhs))
        };
        let k = self.kkt(&b);
        (k <= POLISH_TOL).then_some((b, k))
    }
}

/// Lagrangian solve; small penalties are reached by continuation from a large
/// multiple of `w`, warm-starting each stage.
pub(crate) fn lagrangian(
    prob: &LagrangeProblem,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> SolverResult {
    if warm.is_some() {
        return admm_lagrangian(prob, opts, warm);
    }
    let g0 = prob.gradient(&DVector::zeros(prob.a.ncols()));
    let ratio = (0..g0.len())
        .filter(|&i| prob.w[i] > 0.0)
        .map(|i| g0[i].abs() / prob.w[i])
        .fold(0.0, f64::max);
    if ratio <= 100.0 {
        return admm_lagrangian(prob, opts, None);
    }
    let stage_opts = SolverOptions { max_iter: opts.max_iter.min(2_000), ..opts.clone() };
    let mut factor = ratio / 10.0;
    let mut warm_z: Option<DVector<f64>> = None;
    let mut spent = 0;
    while factor > 1.0 {
        let ws: Vec<f64> = prob.w.iter().map(|v| v * factor).collect();
        let stage = LagrangeProblem { w: &ws, ..*prob };
        let r = admm_lagrangian(&stage, &stage_opts, warm_z.as_ref());
        spent += r.iterations;
        warm_z = Some(r.xhat);
        factor /= 10.0;
    }
    let mut r = admm_lagrangian(prob, opts, warm_z.as_ref());
    r.iterations += spent;
    r
}

fn admm_lagrangian(
    prob: &LagrangeProblem,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> SolverResult {
    let (a, y, w) = (prob.a, prob.y, prob.w);
    let m = a.ncols();
    let q: Vec<f64> = prob.quad.map(|qd| qd.q.to_vec()).unwrap_or_else(|| vec![0.0; m]);
    let mut rhs0 = a.tr_mul(y);
    if let Some(qd) = prob.quad {
        for i in 0..m {
            rhs0[i] += qd.q[i] * qd.mu[i];
        }
    }
    let gram = (a.nrows() > m).then(|| a.tr_mul(a));
    let col_scale = (a.norm_squared() / m.max(1) as f64).max(1e-12);
    let mut rho = col_scale;
    let d_of = |rho: f64| DVector::from_fn(m, |i, _| q[i] + rho);
    let mut sys = match LagrangeSystem::factor(a, gram.as_ref(), &d_of(rho)) {
        Some(s) => s,
        None => return failed(m),
    };

    let mut z = warm.cloned().unwrap_or_else(|| DVector::zeros(m));
    let g0 = prob.gradient(&z);
    let mut u = DVector::from_fn(m, |i, _| (-g0[i]).clamp(-w[i], w[i]) / rho);
    let mut last_sig = signature(&z);
    let mut tried_sig: Option<Vec<i8>> = None;

    for it in 1..=opts.max_iter {
        let r = &rhs0 + (&z - &u) * rho;
        let x = sys.solve(a, &r);
        let xh = &x * RELAX + &z * (1.0 - RELAX);
        let z_old = std::mem::replace(&mut z, DVector::zeros(m));
        for i in 0..m {
            z[i] = soft_threshold(xh[i] + u[i], w[i] / rho);
        }
        u += &xh - &z;

        if it % CHECK_EVERY != 0 {
            continue;
        }
        let sig = signature(&z);
        if sig == last_sig && (tried_sig.as_ref() != Some(&sig) || it % ADAPT_EVERY == 0) {
            tried_sig = Some(sig.clone());
            if let Some((b, k)) = prob.polish(&z) {
                let obj = prob.objective(&b);
                return SolverResult::new(b, it, k, obj, Status::Converged);
            }
        }
        last_sig = sig;
        let k = prob.kkt(&z);
        if k <= POLISH_TOL {
            let obj = prob.objective(&z);
            return SolverResult::new(z, it, k, obj, Status::Converged);
        }
        if it % ADAPT_EVERY == 0 {
            let pr = (&x - &z).norm();
            let dr = rho * (&z - &z_old).norm();
            let factor = if pr > 10.0 * dr {
                2.0
            } else if dr > 10.0 * pr {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                u /= factor;
                match LagrangeSystem::factor(a, gram.as_ref(), &d_of(rho)) {
                    Some(s) => sys = s,
                    None => return failed(m),
                }
            }
        }
    }
    let k = prob.kkt(&z);
    let status = if k <= opts.tol { Status::Converged } else { Status::MaxIter };
    let obj = prob.objective(&z);
    SolverResult::new(z, opts.max_iter, k, obj, status)
}

fn failed(m: usize) -> SolverResult {
    SolverResult::new(DVector::zeros(m), 0, f64::INFINITY, f64::NAN, Status::Infeasible)
}

// ------------------------------------------------------------------ Equality

struct RowSpace {
    /// Orthonormal basis of the row space of `A`, as columns (`m x r`).
    v: DMatrix<f64>,
    /// `U_r Sigma_r^{-1}` (`n x r`), maps row-space coordinates to multipliers.
    u_sinv: DMatrix<f64>,
    /// Minimum-norm feasible point.
    x_p: DVector<f64>,
    residual: f64,
}

fn row_space(a: &DMatrix<f64>, y: &DVector<f64>) -> RowSpace {
    let (n, m) = a.shape();
    if n == 0 || m == 0 {
        return RowSpace {
            v: DMatrix::zeros(m, 0),
            u_sinv: DMatrix::zeros(n, 0),
            x_p: DVector::zeros(m),
            residual: y.norm(),
        };
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-12 * smax && smax > 0.0)
        .collect();
    let uu = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let v = DMatrix::from_fn(m, keep.len(), |r, c| vt[(keep[c], r)]);
    let u_sinv = DMatrix::from_fn(n, keep.len(), |r, c| uu[(r, keep[c])] / svd.singular_values[keep[c]]);
    let x_p = &v * u_sinv.tr_mul(y);
    let residual = (a * &x_p - y).norm();
    RowSpace { v, u_sinv, x_p, residual }
}

pub(crate) struct EqualityProblem<'a> {
    pub a: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    pub w: &'a [f64],
}

impl<'a> EqualityProblem<'a> {
    fn primal_gap(&self, b: &DVector<f64>) -> f64 {
        (self.a * b - self.y).norm() / (1.0 + self.y.norm())
    }

    fn wmax(&self) -> f64 {
        self.w.iter().copied().fold(0.0, f64::max).max(1e-300)
    }

    /// Certifies an active-set refit using the multiplier estimate `nu_a`.
    fn polish(&self, z: &DVector<f64>, nu_a: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
        let s = active_set(z, self.w);
        let m = z.len();
        if s.len() > self.a.nrows() {
            return None;
        }
        let as_ = linalg::columns(self.a, &s);
        let sv = linalg::singular_values(&as_);
        if let (Some(hi), Some(lo)) = (sv.first(), sv.last()) {
            if *lo <= 1e-10 * hi {
                return None;
            }
        }
        let bs = linalg::lstsq(&as_, self.y);
        let b = linalg::scatter(m, &s, &bs);
        let primal = self.primal_gap(&b);
        if primal > 1e-11 {
            return None;
        }
        let c = DVector::from_fn(s.len(), |k, _| {
            let i = s[k];
            let sg = if bs[k] != 0.0 { linalg::sign(bs[k]) } else { linalg::sign(z[i]) };
            self.w[i] * sg
        });
        let nu = if s.is_empty() {
            nu_a.clone()
        } else {
            let corr = linalg::solve_spd(&as_.tr_mul(&as_), &(c - as_.tr_mul(nu_a)));
            nu_a + &as_ * corr
        };
        let g = self.a.tr_mul(&nu);
        // Multiplier convention: A' nu must lie in W d|b|, i.e. -(-A'nu) as the gradient.
        let dual = subgradient_violation(&(-g), self.w, &b) / self.wmax();
        let k = primal.max(dual);
        (k <= POLISH_TOL).then_some((b, k))
    }
}

pub(crate) fn equality(prob: &EqualityProblem, opts: &SolverOptions, warm: Option<&DVector<f64>>) -> SolverResult {
    let (a, y, w) = (prob.a, prob.y, prob.w);
    let m = a.ncols();
    let rs = row_space(a, y);
    if rs.residual > 1e-9 * (1.0 + y.norm()) {
        let obj = l1_weighted(w, &rs.x_p);
        return SolverResult::new(rs.x_p, 0, rs.residual / (1.0 + y.norm()), obj, Status::Infeasible);
    }
    let free_dim = m - rs.v.ncols();
    if w.iter().all(|&v| v == 0.0) {
        let mut r = SolverResult::new(rs.x_p, 0, 0.0, 0.0, Status::Converged);
        r.non_unique = free_dim > 0;
        return r;
    }
    let project = |v: &DVector<f64>| -> DVector<f64> { v - &rs.v * rs.v.tr_mul(v) + &rs.x_p };
    let multiplier = |g: &DVector<f64>| -> DVector<f64> { &rs.u_sinv * rs.v.tr_mul(g) };

    let wpos: Vec<f64> = w.iter().copied().filter(|&v| v > 0.0).collect();
    let wmean = wpos.iter().sum::<f64>() / wpos.len() as f64;
    let xscale = (rs.x_p.norm() / (m as f64).sqrt()).max(1e-12);
    let mut rho = wmean / xscale;

    let mut z = warm.cloned().unwrap_or_else(|| rs.x_p.clone());
    let mut u = DVector::zeros(m);
    let mut last_sig = signature(&z);
    let mut tried_sig: Option<Vec<i8>> = None;
    let mut x = z.clone();

    for it in 1..=opts.max_iter {
        x = project(&(&z - &u));
        let xh = &x * RELAX + &z * (1.0 - RELAX);
        let z_old = std::mem::replace(&mut z, DVector::zeros(m));
        for i in 0..m {
            z[i] = soft_threshold(xh[i] + u[i], w[i] / rho);
        }
        u += &xh - &z;

        if it % CHECK_EVERY != 0 {
            continue;
        }
        let sig = signature(&z);
        if sig == last_sig && (tried_sig.as_ref() != Some(&sig) || it % ADAPT_EVERY == 0) {
            tried_sig = Some(sig.clone());
            let nu_a = multiplier(&(&u * rho));
            if let Some((b, k)) = prob.polish(&z, &nu_a) {
                let obj = l1_weighted(w, &b);
                return SolverResult::new(b, it, k, obj, Status::Converged);
            }
        }
        last_sig = sig;
        if it % ADAPT_EVERY == 0 {
            let pr = (&x - &z).norm();
            let dr = rho * (&z - &z_old).norm();
            if pr > 10.0 * dr {
                rho *= 2.0;
                u /= 2.0;
            } else if dr > 10.0 * pr {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }
    let nu_a = multiplier(&(&u * rho));
    let ru = &u * rho;
    let dual = linalg::norm_inf(&(&ru - a.tr_mul(&nu_a))) / prob.wmax();
    let k = prob.primal_gap(&z).max(dual).max(linalg::norm_inf(&(&x - &z)) / (1.0 + linalg::norm_inf(&z)));
    let status = if k <= opts.tol { Status::Converged } else { Status::MaxIter };
    let obj = l1_weighted(w, &z);
    SolverResult::new(z, opts.max_iter, k, obj, status)
}

// ---------------------------------------------------------------------- Ball

/// `min sum w_i |b_i|  s.t. ||y - A b||_2 <= eps`.
pub(crate) fn ball(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
    eps: f64,
    opts: &SolverOptions,
) -> SolverResult {
    let m = a.ncols();
    if eps <= 0.0 {
        return equality(&EqualityProblem { a, y, w }, opts, None);
    }
    let free: Vec<usize> = (0..m).filter(|&i| w[i] == 0.0).collect();
    let af = linalg::columns(a, &free);
    let bf = linalg::scatter(m, &free, &linalg::lstsq(&af, y));
    let rf = y - a * &bf;
    if rf.norm() <= eps {
        // Zero penalty is attainable: the least-squares fit on the free coordinates is optimal.
        return SolverResult::new(bf, 0, 0.0, 0.0, Status::Converged);
    }
    let full_fit = a * linalg::lstsq(a, y);
    if (y - &full_fit).norm() > eps {
        let b = linalg::lstsq(a, y);
        let obj = l1_weighted(w, &b);
        return SolverResult::new(b, 0, f64::INFINITY, obj, Status::Infeasible);
    }
    let gmax = (0..m)
        .filter(|&i| w[i] > 0.0)
        .map(|i| a.column(i).dot(&rf).abs() / w[i])
        .fold(0.0, f64::max);

    let (mut lo, mut hi) = (0.0, gmax);
    let mut gamma = gmax * (eps / rf.norm()).clamp(1e-3, 0.999);
    let mut warm: Option<DVector<f64>> = None;
    let mut total_it = 0;
    let mut best: Option<(SolverResult, f64)> = None;
    for _ in 0..200 {
        let wg: Vec<f64> = w.iter().map(|v| v * gamma).collect();
        let lp = LagrangeProblem { a, y, w: &wg, quad: None };
        let sol = lagrangian(&lp, opts, warm.as_ref());
        total_it += sol.iterations;
        let r = y - a * &sol.xhat;
        let h = r.norm();
        let gap = (h - eps).abs() / eps;
        if best.as_ref().map_or(true, |(_, g)| gap < *g) {
            best = Some((sol.clone(), gap));
        }
        if gap <= 1e-10 {
            break;
        }
        if h < eps {
            lo = gamma;
        } else {
            hi = gamma;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
        // Exact step along the current linear piece of the path.
        let s = active_set(&sol.xhat, &wg);
        let mut next = f64::NAN;
        if !s.is_empty() && s.len() <= a.nrows() {
            let as_ = linalg::columns(a, &s);
            let c = DVector::from_fn(s.len(), |k, _| w[s[k]] * linalg::sign(sol.xhat[s[k]]));
            let gs = as_.tr_mul(&as_);
            let dir = &as_ * linalg::solve_spd(&gs, &c);
            let r0 = y - &as_ * linalg::solve_spd(&gs, &as_.tr_mul(y));
            let rem = eps * eps - r0.norm_squared();
            if rem > 0.0 && dir.norm() > 0.0 {
                next = rem.sqrt() / dir.norm();
            }
        }
        if !(next > lo && next < hi) {
            next = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        }
        gamma = next;
        warm = Some(sol.xhat);
    }
    let (mut sol, gap) = best.unwrap();
    sol.iterations = total_it;
    sol.objective = l1_weighted(w, &sol.xhat);
    sol.kkt_residual = sol.kkt_residual.max(gap);
    sol.status = if sol.kkt_residual <= opts.tol { Status::Converged } else { Status::MaxIter };
    sol
}
