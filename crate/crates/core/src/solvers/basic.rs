use nalgebra::{DMatrix, DVector};

use super::engine::{self, EqualityProblem, LagrangeProblem};
use super::{Constraint, Problem, SolverOptions, SolverResult, Status};
use crate::error::{Error, Result};
use crate::linalg::{self, Combinations};
use crate::operators::{normalize_columns, SupportSet};

#[derive(Clone, Debug)]
pub struct L0Result {
    pub result: SolverResult,
    pub support: SupportSet,
    /// Only one support of the minimal size fits the data.
    pub unique: bool,
}

/// Exhaustive sparsest fit, `min ||b||_0` s.t. `||y - Ab|| <= eps`, up to `s_max` atoms.
pub fn solve_l0_bruteforce(p: &Problem, s_max: usize) -> Result<L0Result> {
    p.validate()?;
    let m = p.m();
    if m > 20 {
        return Err(Error::InvalidParameter(format!("exhaustive l0 search limited to m <= 20, got {m}")));
    }
    let tol = p.eps.max(1e-9 * (1.0 + p.y.norm()));
    let mut best_fallback: Option<(f64, Vec<usize>, DVector<f64>)> = None;
    for k in 0..=s_max.min(m) {
        let mut hits: Vec<(f64, Vec<usize>, DVector<f64>)> = Vec::new();
        for sub in Combinations::new(m, k) {
            let as_ = linalg::columns(p.a, &sub);
            let bs = linalg::lstsq(&as_, p.y);
            let res = (p.y - &as_ * &bs).norm();
            if res <= tol {
                hits.push((res, sub, bs));
            } else if k == s_max.min(m) && best_fallback.as_ref().map_or(true, |b| res < b.0) {
                best_fallback = Some((res, sub, bs));
            }
        }
        if !hits.is_empty() {
            let unique = hits.len() == 1;
            hits.sort_by(|x, y| x.0.total_cmp(&y.0));
            let (res, sub, bs) = hits.swap_remove(0);
            let x = linalg::scatter(m, &sub, &bs);
            let obj = sub.iter().filter(|&&i| x[i] != 0.0).count() as f64;
            return Ok(L0Result {
                result: SolverResult::new(x, 0, res / (1.0 + p.y.norm()), obj, Status::Converged),
                support: SupportSet::new(sub),
                unique,
            });
        }
    }
    let (res, sub, bs) = best_fallback.unwrap_or((p.y.norm(), Vec::new(), DVector::zeros(0)));
    let x = linalg::scatter(m, &sub, &bs);
    Ok(L0Result {
        result: SolverResult::new(x, 0, res, sub.len() as f64, Status::Infeasible),
        support: SupportSet::new(sub),
        unique: false,
    })
}

pub(crate) fn check_weights(w: &[f64], m: usize) -> Result<()> {
    linalg::check_len("weights", w.len(), m)?;
    if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
    }
    Ok(())
}

/// `min sum_i w_i |b_i|` over `Ab = y` or `||y - Ab|| <= eps`.
pub fn solve_weighted_l1(p: &Problem, weights: &[f64], constraint: Constraint, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    check_weights(weights, p.m())?;
    Ok(match constraint {
        Constraint::Equality | Constraint::Ball(0.0) => {
            engine::equality(&EqualityProblem { a: p.a, y: p.y, w: weights }, opts, None)
        }
        Constraint::Ball(eps) if eps > 0.0 => engine::ball(p.a, p.y, weights, eps, opts),
        Constraint::Ball(eps) => return Err(Error::InvalidParameter(format!("negative ball radius {eps}"))),
    })
}

/// Basis pursuit, `min ||b||_1` s.t. `Ab = y`.
pub fn solve_bp(p: &Problem, opts: &SolverOptions) -> Result<SolverResult> {
    solve_weighted_l1(p, &vec![1.0; p.m()], Constraint::Equality, opts)
}

/// `min ||b||_1` s.t. `||y - Ab|| <= p.eps`.
pub fn solve_bp_noisy(p: &Problem, opts: &SolverOptions) -> Result<SolverResult> {
    solve_weighted_l1(p, &vec![1.0; p.m()], Constraint::from_eps(p.eps), opts)
}

/// `min gamma ||b||_1 + 0.5 ||y - Ab||^2`.
pub fn solve_bpdn(p: &Problem, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    let w = vec![p.gamma; p.m()];
    Ok(engine::lagrangian(&LagrangeProblem { a: p.a, y: p.y, w: &w, quad: None }, opts, None))
}

/// `min sum_i w_i |b_i| + 0.5 ||y - Ab||^2`.
pub fn solve_weighted_bpdn(p: &Problem, weights: &[f64], opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    check_weights(weights, p.m())?;
    Ok(engine::lagrangian(&LagrangeProblem { a: p.a, y: p.y, w: weights, quad: None }, opts, None))
}

/// Indices of the `k` largest magnitudes among `candidates`; ties go to the lower index.
pub(crate) fn top_k(v: &DVector<f64>, candidates: &[usize], k: usize) -> Vec<usize> {
    let mut c = candidates.to_vec();
    c.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    c.truncate(k);
    c.sort_unstable();
    c
}

/// Hard-thresholding iteration `x <- H(x + A'(y - Ax))`, keeping every index in
/// `keep` and the `s_free` largest of the rest.
pub(crate) fn iht_core(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    keep: &SupportSet,
    s_free: usize,
    opts: &SolverOptions,
) -> SolverResult {
    let m = a.ncols();
    let est = linalg::power_norm(a, 500, 1e-12);
    let (a_s, y_s) = if est > 1.0 {
        let c = 1.0 / (est * 1.001);
        (a * c, y * c)
    } else {
        (a.clone(), y.clone())
    };
    let rest = keep.complement(m);
    let mut x = DVector::zeros(m);
    let mut iters = opts.max_iter;
    let mut status = Status::MaxIter;
    for it in 1..=opts.max_iter {
        let v = &x + a_s.tr_mul(&(&y_s - &a_s * &x));
        let mut nx = DVector::zeros(m);
        for i in keep.iter() {
            nx[i] = v[i];
        }
        for i in top_k(&v, rest.indices(), s_free) {
            nx[i] = v[i];
        }
        let change = (&nx - &x).norm();
        let scale = nx.norm().max(1e-300);
        x = nx;
        if change <= opts.tol * scale {
            iters = it;
            status = Status::Converged;
            break;
        }
    }
    let r = y - a * &x;
    let obj = 0.5 * r.norm_squared();
    SolverResult::new(x, iters, 0.0, obj, status)
}

/// Iterative hard thresholding at sparsity `s`.
pub fn solve_iht(p: &Problem, s: usize, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    Ok(iht_core(p.a, p.y, &SupportSet::empty(), s, opts))
}

/// Greedy pursuit from `initial`, adding atoms until `s` are chosen or `||r|| <= p.eps`.
pub fn solve_omp(p: &Problem, s: usize, initial: &SupportSet, _opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    let m = p.m();
    initial.check_within(m)?;
    let (an, _) = normalize_columns(p.a)?;
    let mut sup: Vec<usize> = initial.indices().to_vec();
    let fit = |sup: &[usize]| -> Result<DVector<f64>> {
        let t = SupportSet::new(sup.iter().copied());
        crate::operators::ls_on_support(p.a, p.y, &t)
    };
    let mut x = fit(&sup)?;
    let mut r = p.y - p.a * &x;
    let mut iters = 0;
    while sup.len() < s && r.norm() > p.eps {
        let c = an.tr_mul(&r);
        let mut best: Option<(usize, f64)> = None;
        for i in 0..m {
            if sup.contains(&i) {
                continue;
            }
            if best.map_or(true, |(_, v)| c[i].abs() > v) {
                best = Some((i, c[i].abs()));
            }
        }
        let Some((j, _)) = best else { break };
        sup.push(j);
        x = fit(&sup)?;
        r = p.y - p.a * &x;
        iters += 1;
    }
    let obj = r.norm();
    Ok(SolverResult::new(x, iters, 0.0, obj, Status::Converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt())
    }

    fn sparse(rng: &mut ChaCha8Rng, m: usize, s: usize) -> DVector<f64> {
        let mut x = DVector::zeros(m);
        for i in rand::seq::index::sample(rng, m, s) {
            x[i] = rng.sample::<f64, _>(StandardNormal) + 2.0 * linalg::sign(rng.gen_range(-1.0..1.0));
        }
        x
    }

    #[test]
    fn bp_recovers_sparse_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = gaussian(&mut rng, 40, 100);
        let x = sparse(&mut rng, 100, 6);
        let y = &a * &x;
        let r = solve_bp(&Problem::new(&a, &y).unwrap(), &SolverOptions::default()).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert!((&r.xhat - &x).norm() < 1e-9 * x.norm(), "err {}", (&r.xhat - &x).norm());
    }

    #[test]
    fn square_invertible_returns_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let r = solve_bp(&Problem::new(&a, &y).unwrap(), &SolverOptions::default()).unwrap();
        let want = a.clone().lu().solve(&y).unwrap();
        assert!((r.xhat - want).norm() < 1e-9);
    }

    #[test]
    fn bpdn_zero_above_critical_gamma_and_scalar_soft_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = gaussian(&mut rng, 20, 50);
        let y = DVector::from_fn(20, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = linalg::norm_inf(&a.tr_mul(&y));
        let r = solve_bpdn(&Problem::new(&a, &y).unwrap().with_gamma(g), &SolverOptions::default()).unwrap();
        assert_eq!(r.xhat.norm(), 0.0);
        let one = DMatrix::from_element(1, 1, 1.0);
        for (yv, gam, want) in [(3.0, 1.0, 2.0), (-0.5, 1.0, 0.0), (-2.5, 0.5, -2.0)] {
            let yy = DVector::from_element(1, yv);
            let r = solve_bpdn(&Problem::new(&one, &yy).unwrap().with_gamma(gam), &SolverOptions::default()).unwrap();
            assert!((r.xhat[0] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn bpdn_small_gamma_approaches_bp() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = gaussian(&mut rng, 30, 80);
        let x = sparse(&mut rng, 80, 5);
        let y = &a * &x;
        let opts = SolverOptions::default();
        let bp = solve_bp(&Problem::new(&a, &y).unwrap(), &opts).unwrap();
        let g = 1e-6 * linalg::norm_inf(&a.tr_mul(&y));
        let dn = solve_bpdn(&Problem::new(&a, &y).unwrap().with_gamma(g), &opts).unwrap();
        assert!((&bp.xhat - &dn.xhat).norm() <= 1e-4 * bp.xhat.norm(), "{:?} {:?} {} {}", bp.status, dn.status, (&bp.xhat - &x).norm(), (&dn.xhat - &x).norm());
    }

    #[test]
    fn bp_noisy_hits_the_ball_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = gaussian(&mut rng, 30, 60);
        let x = sparse(&mut rng, 60, 4);
        let w = DVector::from_fn(30, |_, _| 0.01 * rng.sample::<f64, _>(StandardNormal));
        let y = &a * &x + w;
        let eps = 0.1;
        let r = solve_bp_noisy(&Problem::new(&a, &y).unwrap().with_eps(eps), &SolverOptions::default()).unwrap();
        assert_eq!(r.status, Status::Converged);
        let res = (&y - &a * &r.xhat).norm();
        assert!((res - eps).abs() < 1e-8, "residual {res}");
        assert!(r.objective <= linalg::norm1(&x) + 1e-9);
        let y_small = &y * 1e-3;
        let z = solve_bp_noisy(&Problem::new(&a, &y_small).unwrap().with_eps(eps), &SolverOptions::default()).unwrap();
        assert_eq!(z.xhat.norm(), 0.0);
    }

    #[test]
    fn infeasible_equality_is_flagged() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let r = solve_bp(&Problem::new(&a, &y).unwrap(), &SolverOptions::default()).unwrap();
        assert_eq!(r.status, Status::Infeasible);
    }

    #[test]
    fn iht_tie_breaks_to_lower_index() {
        let a = DMatrix::<f64>::identity(4, 4);
        let y = DVector::from_vec(vec![1.0, 2.0, 2.0, 0.5]);
        let r = solve_iht(&Problem::new(&a, &y).unwrap(), 1, &SolverOptions::default()).unwrap();
        assert_eq!(SupportSet::of_nonzeros(&r.xhat).indices(), &[1]);
    }

    #[test]
    fn iht_rescales_large_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = gaussian(&mut rng, 60, 100) * 5.0;
        let x = sparse(&mut rng, 100, 3);
        let y = &a * &x;
        let r = solve_iht(&Problem::new(&a, &y).unwrap(), 3, &SolverOptions { tol: 1e-12, max_iter: 5000 }).unwrap();
        assert!((&r.xhat - &x).norm() < 1e-6 * x.norm());
    }

    #[test]
    fn omp_exact_on_orthonormal() {
        let a = DMatrix::<f64>::identity(6, 6);
        let x = DVector::from_vec(vec![0.0, 3.0, 0.0, -1.0, 0.0, 0.0]);
        let r = solve_omp(&Problem::new(&a, &x).unwrap(), 2, &SupportSet::empty(), &SolverOptions::default()).unwrap();
        assert!((r.xhat - &x).norm() < 1e-14);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn l0_finds_sparsest_and_uniqueness() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let a = gaussian(&mut rng, 6, 10);
        let x = sparse(&mut rng, 10, 2);
        let y = &a * &x;
        let r = solve_l0_bruteforce(&Problem::new(&a, &y).unwrap(), 3).unwrap();
        assert!(r.unique);
        assert!((&r.result.xhat - &x).norm() < 1e-9);
        let big = DMatrix::<f64>::zeros(3, 21);
        assert!(solve_l0_bruteforce(&Problem::new(&big, &DVector::zeros(3)).unwrap(), 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn bpdn_solutions_satisfy_kkt(seed in 0u64..1000, frac in 0.01f64..0.9) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(&mut rng, 15, 30);
            let y = DVector::from_fn(15, |_, _| rng.sample::<f64, _>(StandardNormal));
            let gam = frac * linalg::norm_inf(&a.tr_mul(&y));
            let r = solve_bpdn(&Problem::new(&a, &y).unwrap().with_gamma(gam), &SolverOptions::default()).unwrap();
            let g = a.tr_mul(&(&y - &a * &r.xhat));
            for i in 0..30 {
                if r.xhat[i] != 0.0 {
                    prop_assert!((g[i] - gam * r.xhat[i].signum()).abs() <= 1e-6 * gam);
                } else {
                    prop_assert!(g[i].abs() <= gam * (1.0 + 1e-6));
                }
            }
        }

        #[test]
        fn bp_is_feasible_with_minimal_l1(seed in 0u64..1000) {
            // Any feasible point, e.g. the minimum-norm solution, has l1 norm at least the optimum.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(&mut rng, 8, 16);
            let y = DVector::from_fn(8, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = solve_bp(&Problem::new(&a, &y).unwrap(), &SolverOptions::default()).unwrap();
            prop_assert!((&a * &r.xhat - &y).norm() <= 1e-8 * (1.0 + y.norm()));
            let mn = linalg::pinv(&a, 1e-12) * &y;
            prop_assert!(linalg::norm1(&r.xhat) <= linalg::norm1(&mn) + 1e-9);
        }
    }
}
