//! Experiment harnesses: Monte Carlo phase transitions, recursive recovery of
//! simulated and image sequences, parameter tuning and weak-threshold sweeps.
//!
//! Every harness derives one seed per trial from the master seed, runs trials
//! on a worker pool and reduces the per-trial results in trial order, so the
//! output does not depend on the number of workers.

mod dynamic;
mod mri;
mod phase;
pub mod plot;
mod weak;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dynamic::{run_dynamic_experiment, run_tune, DynamicConfig, DynamicReport, TuneReport, TunedSet};
pub use mri::{run_mri_experiment, MriConfig};
pub use phase::{run_phase_transition, PhaseAlgo, PhaseConfig, PhaseReport, PhaseRow, PriorQuality};
pub use weak::{run_weak_threshold_sweep, WeakSweepConfig, WeakSweepReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Phase,
    Dynamic,
    Mri,
    Tune,
    WeakThreshold,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Phase => "phase",
            ExperimentKind::Dynamic => "dynamic",
            ExperimentKind::Mri => "mri",
            ExperimentKind::Tune => "tune",
            ExperimentKind::WeakThreshold => "weak-threshold",
        }
    }
}

/// Complete description of one run. Sections not used by `kind` are ignored.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Algorithm names; empty selects the experiment's default list.
    pub algos: Vec<String>,
    pub trials: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; `None` uses every logical core.
    pub jobs: Option<usize>,
    /// Write a JSON-lines per-frame trace for dynamic runs.
    pub trace: bool,
    pub phase: PhaseConfig,
    pub dynamic: DynamicConfig,
    pub mri: MriConfig,
    pub weak: WeakSweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Phase,
            algos: Vec::new(),
            trials: 100,
            seed: 0,
            out: PathBuf::from("results"),
            jobs: None,
            trace: false,
            phase: PhaseConfig::default(),
            dynamic: DynamicConfig::default(),
            mri: MriConfig::default(),
            weak: WeakSweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParameter("jobs must be at least 1".into()));
        }
        match self.kind {
            ExperimentKind::Phase => {
                self.phase.validate()?;
                phase::parse_algos(&self.algos).map(|_| ())
            }
            ExperimentKind::Dynamic | ExperimentKind::Tune => {
                self.dynamic.validate()?;
                dynamic::parse_algos(&self.algos, dynamic::DYNAMIC_DEFAULT).map(|_| ())
            }
            ExperimentKind::Mri => {
                self.mri.validate()?;
                dynamic::parse_algos(&self.algos, mri::MRI_DEFAULT).map(|_| ())
            }
            ExperimentKind::WeakThreshold => self.weak.validate(),
        }
    }
}

/// Runs `f(0..count)` on a pool of `jobs` workers and returns the results in
/// index order.
pub(crate) fn par_trials<T, F>(jobs: Option<usize>, count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

/// Formats a float so that CSV output round-trips exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn csv_table(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{header}");
    for r in rows {
        let _ = writeln!(s, "{}", r.join(","));
    }
    s
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}
