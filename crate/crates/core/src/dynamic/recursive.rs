//! Steps that solve one convex or greedy program per frame, using the previous
//! support estimate (and possibly values) as prior knowledge.

use nalgebra::{DMatrix, DVector};

use super::{DynState, DynamicParams, MuPolicy, SupportRule};
use crate::error::Result;
use crate::operators::SupportSet;
use crate::solvers::{
    iht_pks, mod_bpdn, mod_bpdn_residual, modified_cs, reg_mod_bpdn, solve_bp_noisy, solve_bpdn,
    solve_weighted_bpdn, Constraint, PriorKnowledge, Problem,
};
use crate::support::{add_ls_del, auto_alpha_add_del, threshold_simple};

/// Applies the configured support rule to a fresh solve. Add-LS-Del replaces
/// the estimate by its final least-squares fit.
pub(crate) fn estimate_support(
    x: DVector<f64>,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    prev: &DynState,
    params: &DynamicParams,
) -> Result<(DVector<f64>, SupportSet)> {
    match &params.support {
        SupportRule::Simple { alpha } => {
            let s = threshold_simple(&x, *alpha);
            Ok((x, s))
        }
        SupportRule::AddLsDel { alpha_add, alpha_del } => {
            let r = add_ls_del(y, a, &x, &prev.support, *alpha_add, *alpha_del)?;
            Ok((r.xhat, r.support))
        }
        SupportRule::AddLsDelAuto(rule) => match auto_alpha_add_del(y, a, &x, &prev.support, &prev.xhat, rule) {
            Ok((add, del)) => {
                let r = add_ls_del(y, a, &x, &prev.support, add, del)?;
                Ok((r.xhat, r.support))
            }
            // The previous support is itself ill conditioned: keep the raw solve.
            Err(_) => {
                let s = SupportSet::of_nonzeros(&x);
                Ok((x, s))
            }
        },
    }
}

/// `mu` restricted to `t`.
fn masked(mu: &DVector<f64>, t: &SupportSet) -> DVector<f64> {
    DVector::from_fn(mu.len(), |i, _| if t.contains(i) { mu[i] } else { 0.0 })
}

fn prior(prev: &DynState, params: &DynamicParams, mu: &DVector<f64>) -> PriorKnowledge {
    PriorKnowledge {
        t: prev.support.clone(),
        mu_hat: masked(mu, &prev.support),
        tau: params.tau,
        lambda: params.lambda,
        gamma: params.gamma,
    }
}

/// Plain BPDN on each frame, ignoring the past.
pub fn step_bpdn(prev: &DynState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<DynState> {
    let p = Problem::new(a, y)?.with_gamma(params.gamma_bpdn);
    let x = solve_bpdn(&p, &params.solver)?.xhat;
    let (x, s) = estimate_support(x, y, a, prev, params)?;
    Ok(prev.advance(x, s))
}

/// `xhat_{t-1} + argmin gamma ||b||_1 + 0.5 ||y - A xhat_{t-1} - A b||^2`.
pub fn step_bpdn_residual(prev: &DynState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<DynState> {
    let resid = y - a * &prev.xhat;
    let p = Problem::new(a, &resid)?.with_gamma(params.gamma_bpdn);
    let x = solve_bpdn(&p, &params.solver)?.xhat + &prev.xhat;
    let (x, s) = estimate_support(x, y, a, prev, params)?;
    Ok(prev.advance(x, s))
}

/// `xhat_{t-1} + argmin ||b||_1 s.t. ||y - A xhat_{t-1} - A b|| <= eps`.
pub fn step_bp_residual(prev: &DynState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<DynState> {
    let resid = y - a * &prev.xhat;
    let p = Problem::new(a, &resid)?.with_eps(params.eps);
    let x = solve_bp_noisy(&p, &params.solver)?.xhat + &prev.xhat;
    let (x, s) = estimate_support(x, y, a, prev, params)?;
    Ok(prev.advance(x, s))
}

/// Modified-BPDN with `T` the previous support estimate.
pub fn step_dynamic_modbpdn(prev: &DynState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<DynState> {
    let p = Problem::new(a, y)?;
    let pk = prior(prev, params, &DVector::zeros(a.ncols()));
    let x = mod_bpdn(&p, &pk, &params.solver)?.xhat;
    let (x, s) = estimate_support(x, y, a, prev, params)?;
    Ok(prev.advance(x, s))
}

/// `min gamma ||b_{T^c}||_1 + gamma tau ||b_T||_1 + 0.5 ||y - Ab||^2`.
pub fn step_dynamic_weighted_l1(prev: &DynState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<DynState> {
    let p = Problem::new(a, y)?;
    let mask = prev.support.mask(a.ncols());
    let w: Vec<f64> = mask.iter().map(|&on| if on { params.gamma * params.tau } else { params.gamma }).collect();
    let x = solve_weighted_bpdn(&p, &w, &params.solver)?.xhat;
    let (x, s) = estimate_support(x, y, a, prev, params)?;
    Ok(prev.advance(x, s))
}

/// IHT keeping the previous support; the new support is the nonzero set.
/// A previous support larger than the sparsity is cut to its largest entries.
pub fn step_dynamic_iht_pks(prev: &DynState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<DynState> {
    let s = params.sparsity;
    let mut t: Vec<usize> = prev.support.indices().to_vec();
    if t.len() > s {
        t.sort_by(|&i, &j| prev.xhat[j].abs().total_cmp(&prev.xhat[i].abs()).then(i.cmp(&j)));
        t.truncate(s);
    }
    let pk = PriorKnowledge::support_only(SupportSet::new(t), a.ncols());
    let p = Problem::new(a, y)?;
    let x = iht_pks(&p, &pk, s, &params.solver)?.xhat;
    let support = SupportSet::of_nonzeros(&x);
    Ok(prev.advance(x, support))
}

/// Per-entry weights `gamma / (beta |xhat_i| + 1)` with
/// `beta = n ||xhat||_2^2 / ||xhat||_1^2`; uniform `gamma` when `xhat = 0`.
pub fn streaming_weights(xhat: &DVector<f64>, n: usize, gamma: f64) -> Vec<f64> {
    let l1 = crate::linalg::norm1(xhat);
    if l1 == 0.0 {
        return vec![gamma; xhat.len()];
    }
    let beta = n as f64 * xhat.norm_squared() / (l1 * l1);
    xhat.iter().map(|v| gamma / (beta * v.abs() + 1.0)).collect()
}

pub fn step_streaming_modwl1(prev: &DynState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<DynState> {
    let p = Problem::new(a, y)?;
    let w = streaming_weights(&prev.xhat, a.nrows(), params.gamma);
    let x = solve_weighted_bpdn(&p, &w, &params.solver)?.xhat;
    let s = threshold_simple(&x, params.alpha());
    Ok(prev.advance(x, s))
}

/// Regularized modified-BPDN with the prior value taken per `mu_policy`.
pub fn step_dynamic_regmod_bpdn(prev: &DynState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<DynState> {
    let mu = match params.mu_policy {
        MuPolicy::Previous => &prev.xhat,
        MuPolicy::First => &prev.x_first,
    };
    let p = Problem::new(a, y)?;
    let x = reg_mod_bpdn(&p, &prior(prev, params, mu), &params.solver)?.xhat;
    let (x, s) = estimate_support(x, y, a, prev, params)?;
    Ok(prev.advance(x, s))
}

/// `min ||b_{T^c}||_1 s.t. ||y - Ab|| <= eps` (equality when `eps = 0`).
pub fn step_dynamic_modcs_noisy(prev: &DynState, y: &DVector<f64>, a: &DMatrix<f64>, params: &DynamicParams) -> Result<DynState> {
    let p = Problem::new(a, y)?;
    let pk = PriorKnowledge::support_only(prev.support.clone(), a.ncols());
    let x = modified_cs(&p, &pk, Constraint::from_eps(params.eps), &params.solver)?.xhat;
    let (x, s) = estimate_support(x, y, a, prev, params)?;
    Ok(prev.advance(x, s))
}

/// Modified-BPDN on the residual around `xhat_{t-1}`; shared by KF-ModCS.
pub(crate) fn modbpdn_residual_solve(
    prev_x: &DVector<f64>,
    prev_support: &SupportSet,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    params: &DynamicParams,
) -> Result<DVector<f64>> {
    let p = Problem::new(a, y)?;
    let pk = PriorKnowledge {
        t: prev_support.clone(),
        mu_hat: masked(prev_x, prev_support),
        tau: 0.0,
        lambda: 0.0,
        gamma: params.gamma,
    };
    Ok(mod_bpdn_residual(&p, &pk, &params.solver)?.xhat)
}
