//! Monte Carlo probability of exact recovery against the number of
//! measurements, for recovery with partial support or value knowledge.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::plot::{line_plot, Series};
use super::{csv_table, fmt_f64, par_trials, ExperimentConfig};
use crate::error::{Error, Result};
use crate::operators::{ls_on_support, SupportSet};
use crate::simulation::{gaussian_matrix, rng, trial_seed};
use crate::solvers::{modified_cs, solve_bp, weighted_l1_pks, Constraint, PriorKnowledge, Problem, SolverOptions};

/// Relative error below which a recovery counts as exact.
pub const EXACT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseAlgo {
    Bp,
    BpResidual,
    LsCs,
    Modcs,
    Wl1,
}

impl PhaseAlgo {
    pub const ALL: [PhaseAlgo; 5] = [PhaseAlgo::Bp, PhaseAlgo::BpResidual, PhaseAlgo::LsCs, PhaseAlgo::Modcs, PhaseAlgo::Wl1];

    pub fn name(self) -> &'static str {
        match self {
            PhaseAlgo::Bp => "bp",
            PhaseAlgo::BpResidual => "bp-residual",
            PhaseAlgo::LsCs => "ls-cs",
            PhaseAlgo::Modcs => "modcs",
            PhaseAlgo::Wl1 => "wl1",
        }
    }
}

impl std::str::FromStr for PhaseAlgo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PhaseAlgo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown phase-transition algorithm '{s}'")))
    }
}

pub(crate) fn parse_algos(names: &[String]) -> Result<Vec<PhaseAlgo>> {
    if names.is_empty() {
        return Ok(PhaseAlgo::ALL.to_vec());
    }
    let mut out = Vec::new();
    for n in names {
        let a: PhaseAlgo = n.parse()?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    Ok(out)
}

/// Quality of the value prior given to BP-residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorQuality {
    /// Prior noise variance `1e-4 sigma_x2`.
    Good,
    /// Prior noise variance `sigma_x2`.
    Bad,
}

impl PriorQuality {
    fn variance_factor(self) -> f64 {
        match self {
            PriorQuality::Good => 1e-4,
            PriorQuality::Bad => 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseConfig {
    pub m: usize,
    /// Support sizes; one curve per value.
    pub s_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    /// Misses as a fraction of `s` (rounded).
    pub u_frac: f64,
    /// Extras as a multiple of the miss count.
    pub e_per_u: f64,
    pub sigma_x2: f64,
    pub prior: PriorQuality,
    pub solver: SolverOptions,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            m: 200,
            s_grid: vec![20],
            n_grid: (30..=120).step_by(5).collect(),
            u_frac: 0.1,
            e_per_u: 1.0,
            sigma_x2: 5.0,
            prior: PriorQuality::Good,
            solver: SolverOptions { tol: 1e-9, max_iter: 20_000 },
        }
    }
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.s_grid.is_empty() || self.n_grid.is_empty() {
            return Err(Error::InvalidParameter("m, s_grid and n_grid must be non-empty".into()));
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n == 0 || n > self.m) {
            return Err(Error::InvalidParameter(format!("n = {n} outside 1..={}", self.m)));
        }
        for &s in &self.s_grid {
            let (u, e) = self.sizes(s);
            if s == 0 || s > self.m || u > s || s + e > self.m {
                return Err(Error::InvalidParameter(format!("s = {s} (u = {u}, e = {e}) does not fit m = {}", self.m)));
            }
        }
        if !(self.u_frac >= 0.0) || !(self.e_per_u >= 0.0) || !(self.sigma_x2 > 0.0) {
            return Err(Error::InvalidParameter("u_frac, e_per_u must be >= 0 and sigma_x2 > 0".into()));
        }
        Ok(())
    }

    /// `(u, e)` for support size `s`.
    pub fn sizes(&self, s: usize) -> (usize, usize) {
        let u = (self.u_frac * s as f64).round() as usize;
        (u, (self.e_per_u * u as f64).round() as usize)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRow {
    pub n: usize,
    pub s: usize,
    pub algo: PhaseAlgo,
    pub trials: usize,
    pub successes: usize,
}

impl PhaseRow {
    pub fn prob(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

#[derive(Clone, Debug)]
pub struct PhaseReport {
    /// Sorted by `(n, s, algo name)`.
    pub rows: Vec<PhaseRow>,
}

impl PhaseReport {
    pub fn to_csv(&self) -> String {
        csv_table(
            "n,s,algo,trials,successes,prob",
            self.rows.iter().map(|r| {
                vec![
                    r.n.to_string(),
                    r.s.to_string(),
                    r.algo.name().to_string(),
                    r.trials.to_string(),
                    r.successes.to_string(),
                    fmt_f64(r.prob()),
                ]
            }),
        )
    }

    /// Smallest grid `n` whose success probability is at least `level`.
    pub fn n_star(&self, algo: PhaseAlgo, s: usize, level: f64) -> Option<usize> {
        self.rows.iter().filter(|r| r.algo == algo && r.s == s && r.prob() >= level).map(|r| r.n).min()
    }

    pub fn plot_svg(&self) -> String {
        let mut keys: Vec<(usize, PhaseAlgo)> = Vec::new();
        for r in &self.rows {
            if !keys.contains(&(r.s, r.algo)) {
                keys.push((r.s, r.algo));
            }
        }
        let multi_s = keys.iter().any(|k| k.0 != keys[0].0);
        let series: Vec<Series> = keys
            .iter()
            .map(|&(s, a)| Series {
                label: if multi_s { format!("{} s={s}", a.name()) } else { a.name().to_string() },
                points: self.rows.iter().filter(|r| r.s == s && r.algo == a).map(|r| (r.n as f64, r.prob())).collect(),
            })
            .collect();
        line_plot("Probability of exact recovery", "n", "probability", &series, false)
    }
}

/// One random instance: signal, support knowledge and value prior.
struct Instance {
    x: DVector<f64>,
    t: SupportSet,
    mu: DVector<f64>,
}

fn draw_instance(cfg: &PhaseConfig, s: usize, seed: u64) -> Instance {
    let m = cfg.m;
    let (u, e) = cfg.sizes(s);
    let mut r = rng(seed);
    let support: Vec<usize> = sample(&mut r, m, s).into_vec();
    let normal = Normal::new(0.0, cfg.sigma_x2.sqrt()).expect("positive variance");
    let mut x = DVector::zeros(m);
    for &i in &support {
        x[i] = normal.sample(&mut r);
    }
    let n_set = SupportSet::new(support.iter().copied());
    let outside = n_set.complement(m);
    let extras: Vec<usize> = sample(&mut r, outside.len(), e).into_iter().map(|k| outside.indices()[k]).collect();
    let misses: Vec<usize> = sample(&mut r, s, u).into_iter().map(|k| n_set.indices()[k]).collect();
    let t = n_set.union(&SupportSet::new(extras)).difference(&SupportSet::new(misses));
    let noise = Normal::new(0.0, (cfg.sigma_x2 * cfg.prior.variance_factor()).sqrt()).expect("positive variance");
    let mut mu = DVector::zeros(m);
    for i in t.iter() {
        mu[i] = x[i] + noise.sample(&mut r);
    }
    Instance { x, t, mu }
}

fn recover(algo: PhaseAlgo, inst: &Instance, a: &nalgebra::DMatrix<f64>, y: &DVector<f64>, s: usize, cfg: &PhaseConfig) -> Result<DVector<f64>> {
    let p = Problem::new(a, y)?;
    let m = cfg.m;
    let opts = &cfg.solver;
    Ok(match algo {
        PhaseAlgo::Bp => solve_bp(&p, opts)?.xhat,
        PhaseAlgo::BpResidual => residual_bp(a, y, &inst.mu, opts)?,
        PhaseAlgo::LsCs => {
            let mu = ls_on_support(a, y, &inst.t)?;
            residual_bp(a, y, &mu, opts)?
        }
        PhaseAlgo::Modcs => {
            modified_cs(&p, &PriorKnowledge::support_only(inst.t.clone(), m), Constraint::Equality, opts)?.xhat
        }
        PhaseAlgo::Wl1 => {
            let (_, e) = cfg.sizes(s);
            let pk = PriorKnowledge { tau: (e as f64 / s as f64).min(1.0), ..PriorKnowledge::support_only(inst.t.clone(), m) };
            weighted_l1_pks(&p, &pk, Constraint::Equality, opts)?.xhat
        }
    })
}

/// `mu + argmin ||b||_1 s.t. A b = y - A mu`.
fn residual_bp(a: &nalgebra::DMatrix<f64>, y: &DVector<f64>, mu: &DVector<f64>, opts: &SolverOptions) -> Result<DVector<f64>> {
    let r = y - a * mu;
    Ok(solve_bp(&Problem::new(a, &r)?, opts)?.xhat + mu)
}

pub(crate) fn is_exact(x: &DVector<f64>, xhat: &DVector<f64>) -> bool {
    (x - xhat).norm() < EXACT_TOL * x.norm()
}

/// For each `(n, s)` pair and trial: draws the instance and a Gaussian
/// matrix, then records exact recovery for each algorithm. The instance for a
/// given `(s, trial)` is shared by every `n` and algorithm.
pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<PhaseReport> {
    cfg.validate()?;
    let pc = &cfg.phase;
    let algos = parse_algos(&cfg.algos)?;
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for &s in &pc.s_grid {
        for &n in &pc.n_grid {
            cells.push((n, s));
        }
    }
    let trials = cfg.trials;
    let hits = par_trials(cfg.jobs, cells.len() * trials, |job| {
        let (cell, trial) = (job / trials, job % trials);
        let (n, s) = cells[cell];
        let inst = draw_instance(pc, s, trial_seed(cfg.seed, "phase-instance", (s as u64) << 32 | trial as u64));
        let a = gaussian_matrix(n, pc.m, trial_seed(cfg.seed, "phase-matrix", ((s as u64) << 48) | ((n as u64) << 24) | trial as u64), false);
        let y = &a * &inst.x;
        algos
            .iter()
            .map(|&algo| {
                // A solver failure counts as a failed recovery.
                Ok(recover(algo, &inst, &a, &y, s, pc).map(|xh| is_exact(&inst.x, &xh)).unwrap_or(false))
            })
            .collect::<Result<Vec<bool>>>()
    })?;
    let mut rows = Vec::new();
    for (c, &(n, s)) in cells.iter().enumerate() {
        for (k, &algo) in algos.iter().enumerate() {
            let successes = (0..trials).filter(|&t| hits[c * trials + t][k]).count();
            rows.push(PhaseRow { n, s, algo, trials, successes });
        }
    }
    rows.sort_by(|p, q| (p.n, p.s, p.algo.name()).cmp(&(q.n, q.s, q.algo.name())));
    Ok(PhaseReport { rows })
}
