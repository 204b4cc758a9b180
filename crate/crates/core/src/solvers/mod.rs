//! Static sparse recovery and recovery with partial support or value knowledge.

mod basic;
pub(crate) mod engine;
mod pks;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::SupportSet;

pub use basic::{
    solve_bp, solve_bp_noisy, solve_bpdn, solve_iht, solve_l0_bruteforce, solve_omp,
    solve_weighted_bpdn, solve_weighted_l1, L0Result,
};
pub use pks::{
    iht_pks, ls_cs, mod_bpdn, mod_bpdn_residual, modcs_projected, modified_cs, reg_mod_bpdn,
    weighted_l1_pks,
};

/// Outcome classification for a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct SolverResult {
    pub xhat: DVector<f64>,
    pub iterations: usize,
    /// Relative violation of the optimality conditions at `xhat`.
    pub kkt_residual: f64,
    pub objective: f64,
    pub status: Status,
    /// Set when the minimiser is known not to be unique.
    pub non_unique: bool,
}

impl SolverResult {
    pub(crate) fn new(xhat: DVector<f64>, iterations: usize, kkt: f64, objective: f64, status: Status) -> Self {
        SolverResult { xhat, iterations, kkt_residual: kkt, objective, status, non_unique: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-6, max_iter: 20_000 }
    }
}

/// Data of a single recovery problem `y = A x + w`.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub a: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    /// Noise-ball radius (`0` selects the equality constraint).
    pub eps: f64,
    /// l1 penalty weight for Lagrangian programs.
    pub gamma: f64,
}

impl<'a> Problem<'a> {
    pub fn new(a: &'a DMatrix<f64>, y: &'a DVector<f64>) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::Dimension(format!("A has {} rows but y has length {}", a.nrows(), y.len())));
        }
        Ok(Problem { a, y, eps: 0.0, gamma: 0.0 })
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn m(&self) -> usize {
        self.a.ncols()
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.a.nrows() != self.y.len() {
            return Err(Error::Dimension(format!("A has {} rows but y has length {}", self.a.nrows(), self.y.len())));
        }
        if !(self.eps >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter("eps and gamma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Feasible set of a constrained l1 program.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    Equality,
    Ball(f64),
}

impl Constraint {
    pub fn from_eps(eps: f64) -> Self {
        if eps > 0.0 {
            Constraint::Ball(eps)
        } else {
            Constraint::Equality
        }
    }
}

/// Prior knowledge about the current signal: support `t` and values `mu_hat` on it.
#[derive(Clone, Debug)]
pub struct PriorKnowledge {
    pub t: SupportSet,
    pub mu_hat: DVector<f64>,
    pub tau: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl PriorKnowledge {
    pub fn support_only(t: SupportSet, m: usize) -> Self {
        PriorKnowledge { t, mu_hat: DVector::zeros(m), tau: 0.0, lambda: 0.0, gamma: 0.0 }
    }

    pub(crate) fn validate(&self, m: usize) -> Result<()> {
        self.t.check_within(m)?;
        if self.mu_hat.len() != m {
            return Err(Error::Dimension(format!("mu_hat has length {}, expected {m}", self.mu_hat.len())));
        }
        if let Some(i) = (0..m).find(|&i| self.mu_hat[i] != 0.0 && !self.t.contains(i)) {
            return Err(Error::InvalidParameter(format!("mu_hat is nonzero at {i}, outside T")));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidParameter(format!("tau = {} outside [0, 1]", self.tau)));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter("lambda and gamma must be non-negative".into()));
        }
        Ok(())
    }
}
