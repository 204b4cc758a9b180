//! Weak threshold of weighted-l1 as a function of the weight `tau`.

use serde::{Deserialize, Serialize};

use super::plot::{line_plot, Series};
use super::{csv_table, fmt_f64, par_trials, ExperimentConfig};
use crate::error::{Error, Result};
use crate::tuning::{weak_threshold, WeakThresholdQuery};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakSweepConfig {
    /// Support-knowledge fractions and grid resolution; `omega` is set from each `tau`.
    pub query: WeakThresholdQuery,
    /// Weights on the known support; `0` means modified-CS.
    pub tau_grid: Vec<f64>,
}

impl Default for WeakSweepConfig {
    fn default() -> Self {
        WeakSweepConfig {
            query: WeakThresholdQuery { gamma1: 0.1, gamma2: 0.9, p1: 0.9, p2: 0.02, ..Default::default() },
            tau_grid: (0..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

impl WeakSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_grid.is_empty() || self.tau_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidParameter("tau grid must be non-empty with values in [0, 1]".into()));
        }
        Ok(())
    }

    fn query_for(&self, tau: f64) -> WeakThresholdQuery {
        let omega = if tau > 0.0 { 1.0 / tau } else { f64::INFINITY };
        WeakThresholdQuery { omega, ..self.query.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct WeakSweepReport {
    /// `(tau, delta_c)` in grid order.
    pub rows: Vec<(f64, f64)>,
}

impl WeakSweepReport {
    /// `tau,delta_c` sorted by `tau`.
    pub fn to_csv(&self) -> String {
        let mut rows = self.rows.clone();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        csv_table("tau,delta_c", rows.iter().map(|(t, d)| vec![fmt_f64(*t), fmt_f64(*d)]))
    }

    /// `tau` with the smallest threshold (the first on ties).
    pub fn best_tau(&self) -> Option<f64> {
        self.rows.iter().fold(None, |best: Option<(f64, f64)>, &(t, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((t, d)),
        })
        .map(|b| b.0)
    }

    pub fn plot_svg(&self) -> String {
        let mut pts = self.rows.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        line_plot("Weak threshold", "tau", "delta_c", &[Series { label: "delta_c".into(), points: pts }], false)
    }
}

pub fn run_weak_threshold_sweep(cfg: &ExperimentConfig) -> Result<WeakSweepReport> {
    cfg.validate()?;
    let w = &cfg.weak;
    let deltas = par_trials(cfg.jobs, w.tau_grid.len(), |k| weak_threshold(&w.query_for(w.tau_grid[k])))?;
    Ok(WeakSweepReport { rows: w.tau_grid.iter().copied().zip(deltas).collect() })
}
