//! Recursive recovery of a simulated sparse sequence from random Gaussian
//! measurements, and the calibration shared with the image-sequence harness.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::plot::{line_plot, Series};
use super::{csv_table, fmt_f64, par_trials, ExperimentConfig};
use crate::dynamic::{
    initial_gamma, run_sequence, write_trace, Algorithm, DynState, DynamicParams, Frame, NoiseScale, SupportRule,
};
use crate::error::{Error, Result};
use crate::operators::{ls_on_support, SupportSet};
use crate::simulation::{add_noise, gaussian_matrix, generate_model_sequence, trial_seed, NrmseAccumulator, SignalModelParams};
use crate::solvers::{solve_bpdn, Problem};
use crate::support::threshold_simple;
use crate::tuning::{tune_gamma_lambda_with_noise, tune_kf_params, BoundReport, NoiseNorms, TunedParams, LAMBDA_GRID, MODBPDN_LAMBDA};

pub(crate) const DYNAMIC_DEFAULT: &[Algorithm] = &[
    Algorithm::Bpdn,
    Algorithm::BpdnResidual,
    Algorithm::PmCsKf,
    Algorithm::ModBpdn,
    Algorithm::WeightedL1,
    Algorithm::StreamingModWl1,
    Algorithm::RegModBpdn,
    Algorithm::KfModCs,
    Algorithm::DcsAmp,
];

pub(crate) fn parse_algos(names: &[String], default: &[Algorithm]) -> Result<Vec<Algorithm>> {
    if names.is_empty() {
        return Ok(default.to_vec());
    }
    let mut out: Vec<Algorithm> = Vec::new();
    for n in names {
        let a: Algorithm = n.parse()?;
        if !out.contains(&a) {
            out.push(a);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicConfig {
    /// Signal model; its seed is replaced by a per-trial seed.
    pub model: SignalModelParams,
    /// Measurements at the two calibration frames.
    pub n1: usize,
    /// Measurements at every later frame.
    pub n_t: usize,
    pub sigma_obs2: f64,
    pub lambda_grid: Vec<f64>,
    /// Solver, DCS-AMP, LMS and PM-CS-KF settings; the tuned fields are overwritten.
    pub params: DynamicParams,
    /// Refit the calibration estimates by least squares on their support.
    pub debias: bool,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig {
            model: SignalModelParams::experiment_preset(0),
            n1: 180,
            n_t: 60,
            sigma_obs2: 4e-4,
            lambda_grid: LAMBDA_GRID.to_vec(),
            params: DynamicParams::default(),
            debias: true,
        }
    }
}

impl DynamicConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let m = self.model.m;
        if self.n1 == 0 || self.n_t == 0 || self.n1 > m || self.n_t > m {
            return Err(Error::InvalidParameter(format!("n1 = {}, n_t = {} must lie in 1..={m}", self.n1, self.n_t)));
        }
        if self.model.t_len < 4 {
            return Err(Error::InvalidParameter("t_len must leave at least one frame after calibration".into()));
        }
        check_noise_and_grid(self.sigma_obs2, &self.lambda_grid)
    }
}

pub(crate) fn check_noise_and_grid(sigma_obs2: f64, grid: &[f64]) -> Result<()> {
    if !(sigma_obs2 >= 0.0) || !sigma_obs2.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma_obs2 = {sigma_obs2}")));
    }
    if grid.is_empty() || grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidParameter("lambda grid must be non-empty and non-negative".into()));
    }
    Ok(())
}

/// Ground truth and measurements of one trial. Frame `k` carries time label
/// `times[k]`; the first two frames are used for calibration only.
pub(crate) struct TrialData {
    pub times: Vec<usize>,
    pub truth: Vec<DVector<f64>>,
    pub supports: Vec<SupportSet>,
    pub mats: Vec<DMatrix<f64>>,
    /// Index into `mats` of each frame's operator.
    pub op_of: Vec<usize>,
    pub ys: Vec<DVector<f64>>,
}

impl TrialData {
    fn op(&self, k: usize) -> &DMatrix<f64> {
        &self.mats[self.op_of[k]]
    }

    fn frames(&self, from: usize) -> Vec<Frame<'_>> {
        (from..self.ys.len()).map(|k| Frame { y: self.ys[k].clone(), a: self.op(k) }).collect()
    }
}

/// Parameters derived from the two calibration frames of one trial.
#[derive(Clone, Debug, Serialize)]
pub struct TunedSet {
    /// Weight of plain BPDN, BPDN-residual and streaming mod-wl1.
    pub gamma_bpdn: f64,
    pub alpha: f64,
    /// `gamma`, `lambda` for reg-mod-BPDN.
    pub reg: TunedParams,
    /// `gamma` (and `tau`) for mod-BPDN, weighted-l1 and KF-ModCS.
    pub modbpdn: TunedParams,
    pub sigma_sys2: f64,
    pub sigma_obs2: f64,
    /// Noise-ball radius for the constrained programs.
    pub eps: f64,
    /// RMS column norm of the recursion operator; tuned weights are mapped
    /// back from unit-column coordinates with it.
    pub column_scale: f64,
    /// Tuning failed for every lambda and fell back to `gamma_bpdn`.
    pub fallback: bool,
    #[serde(skip)]
    pub xhat1: DVector<f64>,
    #[serde(skip)]
    pub xhat2: DVector<f64>,
    #[serde(skip)]
    pub reg_report: Option<BoundReport>,
}

fn unit_columns(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let d = DVector::from_iterator(a.ncols(), a.column_iter().map(|c| c.norm().max(f64::MIN_POSITIVE)));
    let mut out = a.clone();
    for (j, mut c) in out.column_iter_mut().enumerate() {
        c /= d[j];
    }
    (out, d)
}

/// BPDN on the calibration frames, then every tuned parameter.
pub(crate) fn calibrate_with_sigma(
    data: &TrialData,
    grid: &[f64],
    params: &DynamicParams,
    sigma_obs2: f64,
    debias: bool,
) -> Result<TunedSet> {
    let (a1, a2) = (data.op(0), data.op(1));
    let sigma_obs = sigma_obs2.sqrt();
    let gamma_bpdn = initial_gamma(a1, &[&data.ys[0]], sigma_obs, NoiseScale::SqrtLogM)
        .max(initial_gamma(a2, &[&data.ys[1]], sigma_obs, NoiseScale::SqrtLogM));
    let estimate = |a: &DMatrix<f64>, y: &DVector<f64>| -> Result<DVector<f64>> {
        let x = solve_bpdn(&Problem::new(a, y)?.with_gamma(gamma_bpdn), &params.solver)?.xhat;
        Ok(if debias { refit(a, y, x) } else { x })
    };
    let xhat1 = estimate(a1, &data.ys[0])?;
    let xhat2 = estimate(a2, &data.ys[1])?;
    let resid = &data.ys[1] - a2 * &xhat2;
    // The bound is evaluated for the recursion frames, which have fewer
    // measurements: rescale the l2 norm of the noise proxy accordingly.
    let n_ratio = data.ys[2].len() as f64 / data.ys[1].len() as f64;
    let noise = NoiseNorms::of(&resid);
    let noise = NoiseNorms { l2: noise.l2 * n_ratio.sqrt(), linf: noise.linf };

    let (a_unit, d) = unit_columns(data.op(2));
    let c = (d.norm_squared() / d.len() as f64).sqrt();
    let scaled = |x: &DVector<f64>| x.component_mul(&d);
    let (x1s, x2s) = (scaled(&xhat1), scaled(&xhat2));
    let reg = tune_gamma_lambda_with_noise(&x1s, &x2s, noise, &a_unit, grid);
    let modb = tune_gamma_lambda_with_noise(&x1s, &x2s, noise, &a_unit, &[MODBPDN_LAMBDA]);
    let to_orig = |mut p: TunedParams| {
        p.gamma *= c;
        p.lambda *= c * c;
        p
    };
    let (reg, modb, reg_report, fallback) = match (reg, modb) {
        (Ok((r, rep)), Ok((mb, _))) => (to_orig(r), to_orig(mb), Some(rep), false),
        (Ok((r, rep)), Err(_)) => {
            let r = to_orig(r);
            (r.clone(), r, Some(rep), false)
        }
        (Err(_), Ok((mb, _))) => {
            let mb = to_orig(mb);
            (mb.clone(), mb, None, false)
        }
        (Err(_), Err(_)) => {
            let p = fallback_params(&xhat1, &xhat2, gamma_bpdn, noise);
            (p.clone(), p, None, true)
        }
    };
    // Thresholds act on the estimates themselves, not on the scaled copies.
    let (alpha, _) = crate::support::auto_alpha(&xhat1, &crate::support::AlphaRule::default());
    let (sigma_sys2, sigma_obs2_hat) = tune_kf_params(&xhat1, &xhat2, &data.ys[1], a2)?;
    let eps = noise.l2;
    Ok(TunedSet {
        gamma_bpdn,
        alpha,
        reg,
        modbpdn: modb,
        sigma_sys2,
        sigma_obs2: sigma_obs2_hat,
        eps,
        column_scale: c,
        fallback,
        xhat1,
        xhat2,
        reg_report,
    })
}

/// Least squares on the support of `x`, kept only when that support is
/// small enough for a well-posed fit.
fn refit(a: &DMatrix<f64>, y: &DVector<f64>, x: DVector<f64>) -> DVector<f64> {
    let support = SupportSet::of_nonzeros(&x);
    if support.is_empty() || support.len() >= a.nrows() {
        return x;
    }
    match ls_on_support(a, y, &support) {
        Ok(z) if z.iter().all(|v| v.is_finite()) => z,
        _ => x,
    }
}

fn fallback_params(xhat1: &DVector<f64>, xhat2: &DVector<f64>, gamma: f64, noise: NoiseNorms) -> TunedParams {
    let (alpha, _) = crate::support::auto_alpha(xhat1, &crate::support::AlphaRule::default());
    let t = threshold_simple(xhat1, alpha);
    let n = threshold_simple(xhat2, alpha);
    let tau = if n.is_empty() { 0.0 } else { (t.difference(&n).len() as f64 / n.len() as f64).min(1.0) };
    TunedParams {
        alpha,
        gamma,
        lambda: 0.0,
        tau,
        t_size: t.len(),
        n_size: n.len(),
        w_inf: noise.linf,
        w_l2: noise.l2,
        bound: f64::INFINITY,
    }
}

/// Per-algorithm parameters from the tuned set.
pub(crate) fn params_for(algo: Algorithm, tuned: &TunedSet, base: &DynamicParams) -> DynamicParams {
    let mut p = base.clone();
    p.support = SupportRule::Simple { alpha: tuned.alpha };
    p.gamma_bpdn = tuned.gamma_bpdn;
    p.gamma = tuned.modbpdn.gamma;
    p.lambda = 0.0;
    p.tau = tuned.modbpdn.tau;
    p.eps = tuned.eps;
    p.sigma_sys2 = tuned.sigma_sys2;
    p.sigma_obs2 = tuned.sigma_obs2;
    p.sparsity = tuned.modbpdn.n_size.max(1) + tuned.modbpdn.n_size / 10 + 1;
    match algo {
        Algorithm::RegModBpdn => {
            p.gamma = tuned.reg.gamma;
            p.lambda = tuned.reg.lambda;
        }
        Algorithm::StreamingModWl1 => p.gamma = tuned.gamma_bpdn,
        _ => {}
    }
    p
}

/// Per-trial output: squared-error accumulators and wall time per algorithm.
pub(crate) struct TrialOutcome {
    pub acc: Vec<NrmseAccumulator>,
    pub wall_ms: Vec<f64>,
    pub trace: Option<String>,
    pub fallback: bool,
}

pub(crate) fn run_trial(
    data: &TrialData,
    algos: &[Algorithm],
    grid: &[f64],
    base: &DynamicParams,
    sigma_obs2: f64,
    debias: bool,
    want_trace: bool,
) -> Result<TrialOutcome> {
    let tuned = calibrate_with_sigma(data, grid, base, sigma_obs2, debias)?;
    let t_len = data.truth.len();
    let init = DynState::new(tuned.xhat2.clone(), threshold_simple(&tuned.xhat2, tuned.alpha));
    let frames = data.frames(2);
    let mut acc = Vec::with_capacity(algos.len());
    let mut wall = Vec::with_capacity(algos.len());
    let mut trace = want_trace.then(Vec::new);
    for &algo in algos {
        let params = params_for(algo, &tuned, base);
        let res = run_sequence(algo, &params, &init, &frames)
            .map_err(|e| Error::Numerical(format!("{algo}: {e}")))?;
        let mut a = NrmseAccumulator::new(t_len);
        a.add(0, &data.truth[0], &tuned.xhat1);
        a.add(1, &data.truth[1], &tuned.xhat2);
        for (k, x) in res.xhat.iter().enumerate() {
            a.add(k + 2, &data.truth[k + 2], x);
        }
        acc.push(a);
        wall.push(res.wall_ms.iter().sum::<f64>() / res.wall_ms.len().max(1) as f64);
        if let Some(buf) = trace.as_mut() {
            write_trace(&mut *buf, algo, data.times[2], &res, &data.truth[2..], &data.supports[2..])?;
        }
    }
    let trace = trace.map(|b| String::from_utf8(b).expect("trace is UTF-8"));
    Ok(TrialOutcome { acc, wall_ms: wall, trace, fallback: tuned.fallback })
}

/// Results of a sequence experiment.
#[derive(Clone, Debug)]
pub struct DynamicReport {
    pub algos: Vec<Algorithm>,
    pub times: Vec<usize>,
    /// `nrmse[a][k]` for algorithm `a` at `times[k]`.
    pub nrmse: Vec<Vec<f64>>,
    /// Mean wall time per frame in milliseconds.
    pub mean_wall_ms: Vec<f64>,
    pub trials: usize,
    /// Trials whose bound-based tuning fell back to the BPDN weight.
    pub fallbacks: usize,
    /// JSON-lines trace of the first trial, when requested.
    pub trace: Option<String>,
}

impl DynamicReport {
    pub fn series(&self, algo: Algorithm) -> Option<&[f64]> {
        self.algos.iter().position(|&a| a == algo).map(|i| self.nrmse[i].as_slice())
    }

    /// `t,algo,nrmse` sorted by time, then algorithm name.
    pub fn nrmse_csv(&self) -> String {
        let mut order: Vec<usize> = (0..self.algos.len()).collect();
        order.sort_by_key(|&i| self.algos[i].name());
        let rows = self.times.iter().enumerate().flat_map(|(k, t)| {
            order
                .iter()
                .map(move |&i| vec![t.to_string(), self.algos[i].name().to_string(), fmt_f64(self.nrmse[i][k])])
                .collect::<Vec<_>>()
        });
        csv_table("t,algo,nrmse", rows)
    }

    /// `algo,mean_ms_per_frame` sorted by algorithm name.
    pub fn timing_csv(&self) -> String {
        let mut order: Vec<usize> = (0..self.algos.len()).collect();
        order.sort_by_key(|&i| self.algos[i].name());
        csv_table(
            "algo,mean_ms_per_frame",
            order.into_iter().map(|i| vec![self.algos[i].name().to_string(), fmt_f64(self.mean_wall_ms[i])]),
        )
    }

    pub fn plot_svg(&self, title: &str) -> String {
        let series: Vec<Series> = self
            .algos
            .iter()
            .zip(&self.nrmse)
            .map(|(a, v)| Series {
                label: a.name().to_string(),
                points: self.times.iter().zip(v).map(|(&t, &e)| (t as f64, e)).collect(),
            })
            .collect();
        line_plot(title, "t", "NRMSE", &series, true)
    }
}

/// Everything one trial needs besides the algorithm list.
pub(crate) struct TrialSetup {
    pub data: TrialData,
    pub sigma_obs2: f64,
    pub grid: Vec<f64>,
    pub params: DynamicParams,
    pub debias: bool,
}

/// Runs `trials` trials of `make(trial)` and reduces in trial order.
pub(crate) fn run_trials<F>(cfg: &ExperimentConfig, algos: &[Algorithm], experiment: &str, make: F) -> Result<DynamicReport>
where
    F: Fn(u64) -> Result<TrialSetup> + Sync + Send,
{
    let outcomes = par_trials(cfg.jobs, cfg.trials, |k| {
        let seed = trial_seed(cfg.seed, experiment, k as u64);
        let su = make(seed)?;
        let out = run_trial(&su.data, algos, &su.grid, &su.params, su.sigma_obs2, su.debias, cfg.trace && k == 0)?;
        let data = su.data;
        Ok((data.times, out))
    })?;
    let times = outcomes[0].0.clone();
    let t_len = times.len();
    let mut acc = vec![NrmseAccumulator::new(t_len); algos.len()];
    let mut wall = vec![0.0; algos.len()];
    let mut fallbacks = 0;
    let mut trace = None;
    for (_, o) in &outcomes {
        for (i, a) in o.acc.iter().enumerate() {
            acc[i].merge(a);
            wall[i] += o.wall_ms[i];
        }
        fallbacks += o.fallback as usize;
        if trace.is_none() {
            trace = o.trace.clone();
        }
    }
    Ok(DynamicReport {
        algos: algos.to_vec(),
        times,
        nrmse: acc.iter().map(|a| a.finish()).collect(),
        mean_wall_ms: wall.iter().map(|w| w / cfg.trials as f64).collect(),
        trials: cfg.trials,
        fallbacks,
        trace,
    })
}

/// One trial of the simulated experiment: model sequence, a calibration
/// matrix for the first two frames and one matrix for the rest, both with
/// unit-norm columns.
pub(crate) fn simulate_trial(dc: &DynamicConfig, seed: u64) -> Result<TrialData> {
    let mut mp = dc.model.clone();
    mp.seed = trial_seed(seed, "model", 0);
    let trace = generate_model_sequence(&mp)?;
    let m = mp.m;
    let a1 = gaussian_matrix(dc.n1, m, trial_seed(seed, "calibration-matrix", 0), true);
    let a3 = gaussian_matrix(dc.n_t, m, trial_seed(seed, "matrix", 0), true);
    // Time labels follow the trace index; index 0 only seeds the model.
    let idx: Vec<usize> = (1..mp.t_len).collect();
    let op_of: Vec<usize> = (0..idx.len()).map(|k| if k < 2 { 0 } else { 1 }).collect();
    let mats = vec![a1, a3];
    let ys = idx
        .iter()
        .zip(&op_of)
        .map(|(&t, &o)| add_noise(&(&mats[o] * &trace.x[t]), dc.sigma_obs2, trial_seed(seed, "noise", t as u64)))
        .collect();
    Ok(TrialData {
        times: idx.clone(),
        truth: idx.iter().map(|&t| trace.x[t].clone()).collect(),
        supports: idx.iter().map(|&t| trace.supports[t].clone()).collect(),
        mats,
        op_of,
        ys,
    })
}

pub fn run_dynamic_experiment(cfg: &ExperimentConfig) -> Result<DynamicReport> {
    cfg.validate()?;
    let dc = &cfg.dynamic;
    let algos = parse_algos(&cfg.algos, DYNAMIC_DEFAULT)?;
    run_trials(cfg, &algos, "dynamic", |seed| {
        Ok(TrialSetup {
            data: simulate_trial(dc, seed)?,
            sigma_obs2: dc.sigma_obs2,
            grid: dc.lambda_grid.clone(),
            params: dc.params.clone(),
            debias: dc.debias,
        })
    })
}

/// Parameters tuned on the first trial of the dynamic configuration.
#[derive(Clone, Debug, Serialize)]
pub struct TuneReport {
    pub seed: u64,
    pub tuned: TunedSet,
    pub reg_bound: Option<BoundReport>,
    /// Parameters handed to each algorithm.
    pub per_algorithm: Vec<(String, DynamicParams)>,
}

impl TuneReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub fn run_tune(cfg: &ExperimentConfig) -> Result<TuneReport> {
    cfg.validate()?;
    let dc = &cfg.dynamic;
    let algos = parse_algos(&cfg.algos, DYNAMIC_DEFAULT)?;
    let seed = trial_seed(cfg.seed, "dynamic", 0);
    let data = simulate_trial(dc, seed)?;
    let tuned = calibrate_with_sigma(&data, &dc.lambda_grid, &dc.params, dc.sigma_obs2, dc.debias)?;
    let per_algorithm = algos.iter().map(|&a| (a.name().to_string(), params_for(a, &tuned, &dc.params))).collect();
    Ok(TuneReport { seed: cfg.seed, reg_bound: tuned.reg_report.clone(), tuned, per_algorithm })
}
