use nalgebra::{DMatrix, DVector};

use super::basic::{check_weights, iht_core};
use super::engine::{self, EqualityProblem, LagrangeProblem, Quadratic};
use super::{Constraint, PriorKnowledge, Problem, SolverOptions, SolverResult};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{ls_on_support, pseudo_inverse_on_support};

fn split_weights(m: usize, pk: &PriorKnowledge, on_t: f64, off_t: f64) -> Vec<f64> {
    let mask = pk.t.mask(m);
    mask.iter().map(|&inside| if inside { on_t } else { off_t }).collect()
}

fn constrained(p: &Problem, w: &[f64], constraint: Constraint, opts: &SolverOptions) -> Result<SolverResult> {
    check_weights(w, p.m())?;
    let mut r = match constraint {
        Constraint::Ball(eps) if eps > 0.0 => engine::ball(p.a, p.y, w, eps, opts),
        Constraint::Ball(eps) if eps < 0.0 => {
            return Err(Error::InvalidParameter(format!("negative ball radius {eps}")))
        }
        _ => engine::equality(&EqualityProblem { a: p.a, y: p.y, w }, opts, None),
    };
    if w.iter().all(|&v| v == 0.0) && linalg::singular_values(p.a).iter().filter(|&&s| s > 1e-12).count() < p.m() {
        r.non_unique = true;
    }
    Ok(r)
}

/// Least squares on `T`, then BP(-noisy) on the residual measurements.
pub fn ls_cs(p: &Problem, pk: &PriorKnowledge, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    pk.validate(p.m())?;
    let x_init = ls_on_support(p.a, p.y, &pk.t)?;
    let resid = p.y - p.a * &x_init;
    let sub = Problem { y: &resid, ..*p };
    let mut r = constrained(&sub, &vec![1.0; p.m()], Constraint::from_eps(p.eps), opts)?;
    r.xhat += x_init;
    r.objective = linalg::norm1(&(&r.xhat - ls_on_support(p.a, p.y, &pk.t)?));
    Ok(r)
}

/// `min ||b_{T^c}||_1` over the chosen constraint.
pub fn modified_cs(p: &Problem, pk: &PriorKnowledge, constraint: Constraint, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    pk.validate(p.m())?;
    constrained(p, &split_weights(p.m(), pk, 0.0, 1.0), constraint, opts)
}

/// `min tau ||b_T||_1 + ||b_{T^c}||_1` over the chosen constraint.
pub fn weighted_l1_pks(p: &Problem, pk: &PriorKnowledge, constraint: Constraint, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    pk.validate(p.m())?;
    constrained(p, &split_weights(p.m(), pk, pk.tau, 1.0), constraint, opts)
}

/// `min gamma ||b_{T^c}||_1 + 0.5 ||y - Ab||^2 + 0.5 lambda ||b_T - mu_T||^2`.
pub fn reg_mod_bpdn(p: &Problem, pk: &PriorKnowledge, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    pk.validate(p.m())?;
    let m = p.m();
    let w = split_weights(m, pk, 0.0, pk.gamma);
    let q = split_weights(m, pk, pk.lambda, 0.0);
    let quad = Quadratic { q: &q, mu: &pk.mu_hat };
    Ok(engine::lagrangian(&LagrangeProblem { a: p.a, y: p.y, w: &w, quad: Some(quad) }, opts, None))
}

/// `min gamma ||b_{T^c}||_1 + 0.5 ||y - Ab||^2`.
pub fn mod_bpdn(p: &Problem, pk: &PriorKnowledge, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    pk.validate(p.m())?;
    let w = split_weights(p.m(), pk, 0.0, pk.gamma);
    Ok(engine::lagrangian(&LagrangeProblem { a: p.a, y: p.y, w: &w, quad: None }, opts, None))
}

/// `mu_hat + argmin gamma ||b_{T^c}||_1 + 0.5 ||y - A mu_hat - Ab||^2`.
pub fn mod_bpdn_residual(p: &Problem, pk: &PriorKnowledge, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    pk.validate(p.m())?;
    let resid = p.y - p.a * &pk.mu_hat;
    let sub = Problem { y: &resid, ..*p };
    let mut r = mod_bpdn(&sub, pk, opts)?;
    r.xhat += &pk.mu_hat;
    Ok(r)
}

/// Hard thresholding that keeps `T` and the `s - |T|` largest entries off `T`.
pub fn iht_pks(p: &Problem, pk: &PriorKnowledge, s: usize, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    pk.validate(p.m())?;
    if pk.t.len() > s {
        return Err(Error::InvalidParameter(format!("|T| = {} exceeds sparsity {s}", pk.t.len())));
    }
    Ok(iht_core(p.a, p.y, &pk.t, s - pk.t.len(), opts))
}

/// Modified-CS via its projected form: BP on `(P y, P A_{T^c})` with
/// `P = I - A_T A_T^dagger`, then least squares for the entries on `T`.
pub fn modcs_projected(p: &Problem, pk: &PriorKnowledge, opts: &SolverOptions) -> Result<SolverResult> {
    p.validate()?;
    pk.validate(p.m())?;
    let (n, m) = (p.n(), p.m());
    let t = pk.t.indices();
    let tc = pk.t.complement(m);
    let at = linalg::columns(p.a, t);
    let pinv = pseudo_inverse_on_support(p.a, &pk.t)?;
    let proj = DMatrix::<f64>::identity(n, n) - &at * &pinv;
    let a_tilde = &proj * linalg::columns(p.a, tc.indices());
    let y_tilde = &proj * p.y;
    let w = vec![1.0; tc.len()];
    let sub = engine::equality(&EqualityProblem { a: &a_tilde, y: &y_tilde, w: &w }, opts, None);
    let b = &sub.xhat;
    let off = linalg::scatter(m, tc.indices(), b);
    let x_t = &pinv * (p.y - p.a * &off);
    let mut x = off;
    for (k, &i) in t.iter().enumerate() {
        x[i] = x_t[k];
    }
    let mut r = sub.clone();
    r.objective = linalg::norm1(&DVector::from_iterator(tc.len(), tc.iter().map(|i| x[i])));
    r.xhat = x;
    Ok(r)
}
