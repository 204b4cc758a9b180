//! Recursive reconstruction of sparse signal sequences: each step sees only
//! the previous state and the current measurements.

mod amp;
mod kalman;
mod lms;
mod recursive;

use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::SupportSet;
use crate::solvers::{Problem, SolverOptions};
use crate::support::{auto_alpha, threshold_simple, AddDelRule, AlphaRule};

pub use amp::{
    bg_denoise, dcs_amp_em_update, dcs_amp_filter_step, dcs_amp_run, run_dcs_amp, AmpConfig, AmpFrameStats, AmpParams, AmpState,
    BgArSequence, generate_bg_ar_sequence,
};
pub use kalman::{step_kf_modcs, step_pm_cs_kf, KfState};
pub use lms::{za_lms_track, LmsConfig};
pub use recursive::{
    step_bp_residual, step_bpdn, step_bpdn_residual, step_dynamic_iht_pks, step_dynamic_modbpdn,
    step_dynamic_modcs_noisy, step_dynamic_regmod_bpdn, step_dynamic_weighted_l1, step_streaming_modwl1,
};

/// One time step's measurements.
#[derive(Clone, Debug)]
pub struct Frame<'a> {
    pub y: DVector<f64>,
    pub a: &'a DMatrix<f64>,
}

/// Estimate carried from one step to the next.
#[derive(Clone, Debug)]
pub struct DynState {
    pub t: usize,
    pub xhat: DVector<f64>,
    pub support: SupportSet,
    /// Estimate of the first frame (prior for the first-frame policy).
    pub x_first: DVector<f64>,
}

impl DynState {
    pub fn new(xhat: DVector<f64>, support: SupportSet) -> Self {
        DynState { t: 0, x_first: xhat.clone(), xhat, support }
    }

    pub(crate) fn advance(&self, xhat: DVector<f64>, support: SupportSet) -> DynState {
        DynState { t: self.t + 1, xhat, support, x_first: self.x_first.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Bpdn,
    BpdnResidual,
    BpResidual,
    ModBpdn,
    WeightedL1,
    IhtPks,
    StreamingModWl1,
    RegModBpdn,
    ModCsNoisy,
    KfModCs,
    PmCsKf,
    DcsAmp,
    ZaLms,
}

impl Algorithm {
    pub const ALL: [Algorithm; 13] = [
        Algorithm::Bpdn,
        Algorithm::BpdnResidual,
        Algorithm::BpResidual,
        Algorithm::ModBpdn,
        Algorithm::WeightedL1,
        Algorithm::IhtPks,
        Algorithm::StreamingModWl1,
        Algorithm::RegModBpdn,
        Algorithm::ModCsNoisy,
        Algorithm::KfModCs,
        Algorithm::PmCsKf,
        Algorithm::DcsAmp,
        Algorithm::ZaLms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bpdn => "bpdn",
            Algorithm::BpdnResidual => "bpdn-residual",
            Algorithm::BpResidual => "bp-residual",
            Algorithm::ModBpdn => "mod-bpdn",
            Algorithm::WeightedL1 => "weighted-l1",
            Algorithm::IhtPks => "iht-pks",
            Algorithm::StreamingModWl1 => "streaming-mod-wl1",
            Algorithm::RegModBpdn => "reg-mod-bpdn",
            Algorithm::ModCsNoisy => "modcs-noisy",
            Algorithm::KfModCs => "kf-modcs",
            Algorithm::PmCsKf => "pm-cs-kf",
            Algorithm::DcsAmp => "dcs-amp",
            Algorithm::ZaLms => "za-lms",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown algorithm '{s}'")))
    }
}

/// Support estimate after each solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportRule {
    /// `{i : |x_i| > alpha}`.
    Simple { alpha: f64 },
    /// Add-LS-Del with fixed thresholds.
    AddLsDel { alpha_add: f64, alpha_del: f64 },
    /// Add-LS-Del with thresholds chosen per step.
    AddLsDelAuto(AddDelRule),
}

/// Prior value used by reg-mod-BPDN.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuPolicy {
    Previous,
    First,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicParams {
    /// l1 weight of the prior-aware programs.
    pub gamma: f64,
    /// l1 weight of plain BPDN and BPDN-residual.
    pub gamma_bpdn: f64,
    pub lambda: f64,
    pub tau: f64,
    /// Noise-ball radius of the constrained programs.
    pub eps: f64,
    pub support: SupportRule,
    pub mu_policy: MuPolicy,
    /// Sparsity of IHT-PKS.
    pub sparsity: usize,
    pub sigma_sys2: f64,
    pub sigma_obs2: f64,
    /// Support fixed in advance for KF-ModCS (skips the residual solve).
    pub known_support: Option<SupportSet>,
    /// Total pseudo-measurement iterations of PM-CS-KF (`N_tau`).
    pub pm_iters: usize,
    pub r_eps: f64,
    pub lms: LmsConfig,
    pub amp: AmpConfig,
    pub solver: SolverOptions,
}

impl Default for DynamicParams {
    fn default() -> Self {
        DynamicParams {
            gamma: 1e-2,
            gamma_bpdn: 1e-2,
            lambda: 0.0,
            tau: 0.0,
            eps: 0.0,
            support: SupportRule::Simple { alpha: 0.0 },
            mu_policy: MuPolicy::Previous,
            sparsity: 0,
            sigma_sys2: 1.0,
            sigma_obs2: 1.0,
            known_support: None,
            pm_iters: 10,
            r_eps: 1.0,
            lms: LmsConfig::default(),
            amp: AmpConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

impl DynamicParams {
    pub(crate) fn alpha(&self) -> f64 {
        match &self.support {
            SupportRule::Simple { alpha } => *alpha,
            SupportRule::AddLsDel { alpha_del, .. } => *alpha_del,
            SupportRule::AddLsDelAuto(_) => 0.0,
        }
    }
}

/// Initial-frame BPDN weight `max(0.01 ||A' Y||_inf, sigma_obs * scale)` where
/// `Y` stacks the calibration measurements and `scale` is `sqrt(m)` or `sqrt(log m)`.
pub fn initial_gamma(a: &DMatrix<f64>, ys: &[&DVector<f64>], sigma_obs: f64, scale: NoiseScale) -> f64 {
    let m = a.ncols() as f64;
    let corr = ys.iter().map(|y| crate::linalg::norm_inf(&a.tr_mul(y))).fold(0.0, f64::max);
    let s = match scale {
        NoiseScale::SqrtM => m.sqrt(),
        NoiseScale::SqrtLogM => m.ln().sqrt(),
    };
    (1e-2 * corr).max(sigma_obs * s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseScale {
    SqrtM,
    SqrtLogM,
}

/// BPDN on the first frame, then thresholding at the automatic `alpha`.
/// Returns `(xhat0, support0, alpha)`.
pub fn init_first_frame(
    y0: &DVector<f64>,
    a0: &DMatrix<f64>,
    gamma: f64,
    rule: &AlphaRule,
    opts: &SolverOptions,
) -> Result<(DVector<f64>, SupportSet, f64)> {
    let p = Problem::new(a0, y0)?.with_gamma(gamma);
    let x = crate::solvers::solve_bpdn(&p, opts)?.xhat;
    let (alpha, _) = auto_alpha(&x, rule);
    let support = threshold_simple(&x, alpha);
    Ok((x, support, alpha))
}

/// Per-run output; index `k` of each vector refers to the `k`-th processed frame.
#[derive(Clone, Debug, Default)]
pub struct SequenceResult {
    pub xhat: Vec<DVector<f64>>,
    pub supports: Vec<SupportSet>,
    pub wall_ms: Vec<f64>,
}

impl SequenceResult {
    /// `||x_t - xhat_t|| / ||x_t||` per frame.
    pub fn relative_errors(&self, truth: &[DVector<f64>]) -> Vec<f64> {
        self.xhat
            .iter()
            .zip(truth)
            .map(|(h, x)| {
                let d = x.norm();
                if d > 0.0 {
                    (x - h).norm() / d
                } else {
                    h.norm()
                }
            })
            .collect()
    }
}

/// Runs `algo` over `frames`, starting from `init` (the estimate of the frame
/// preceding `frames[0]`).
pub fn run_sequence(algo: Algorithm, params: &DynamicParams, init: &DynState, frames: &[Frame]) -> Result<SequenceResult> {
    let mut out = SequenceResult::default();
    let push = |out: &mut SequenceResult, x: &DVector<f64>, s: &SupportSet, start: Instant| {
        out.xhat.push(x.clone());
        out.supports.push(s.clone());
        out.wall_ms.push(start.elapsed().as_secs_f64() * 1e3);
    };
    match algo {
        Algorithm::KfModCs | Algorithm::PmCsKf => {
            let mut kf = KfState::from_estimate(init, params.sigma_sys2, algo == Algorithm::PmCsKf);
            for f in frames {
                let start = Instant::now();
                kf = if algo == Algorithm::KfModCs {
                    step_kf_modcs(&kf, &f.y, f.a, params)?
                } else {
                    step_pm_cs_kf(&kf, &f.y, f.a, params)?
                };
                push(&mut out, &kf.xhat, &kf.support, start);
            }
        }
        Algorithm::DcsAmp => {
            let start = Instant::now();
            let res = run_dcs_amp(frames, &params.amp)?;
            let per = start.elapsed().as_secs_f64() * 1e3 / frames.len().max(1) as f64;
            for x in res.0 {
                out.supports.push(SupportSet::of_nonzeros(&x));
                out.xhat.push(x);
                out.wall_ms.push(per);
            }
        }
        Algorithm::ZaLms => {
            let start = Instant::now();
            let snaps = za_lms_track(frames, &init.xhat, &params.lms);
            let per = start.elapsed().as_secs_f64() * 1e3 / frames.len().max(1) as f64;
            for x in snaps {
                out.supports.push(threshold_simple(&x, params.alpha()));
                out.xhat.push(x);
                out.wall_ms.push(per);
            }
        }
        _ => {
            let mut st = init.clone();
            for f in frames {
                let start = Instant::now();
                st = match algo {
                    Algorithm::Bpdn => step_bpdn(&st, &f.y, f.a, params)?,
                    Algorithm::BpdnResidual => step_bpdn_residual(&st, &f.y, f.a, params)?,
                    Algorithm::BpResidual => step_bp_residual(&st, &f.y, f.a, params)?,
                    Algorithm::ModBpdn => step_dynamic_modbpdn(&st, &f.y, f.a, params)?,
                    Algorithm::WeightedL1 => step_dynamic_weighted_l1(&st, &f.y, f.a, params)?,
                    Algorithm::IhtPks => step_dynamic_iht_pks(&st, &f.y, f.a, params)?,
                    Algorithm::StreamingModWl1 => step_streaming_modwl1(&st, &f.y, f.a, params)?,
                    Algorithm::RegModBpdn => step_dynamic_regmod_bpdn(&st, &f.y, f.a, params)?,
                    Algorithm::ModCsNoisy => step_dynamic_modcs_noisy(&st, &f.y, f.a, params)?,
                    _ => unreachable!(),
                };
                push(&mut out, &st.xhat, &st.support, start);
            }
        }
    }
    Ok(out)
}

/// One JSON-lines trace record.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub algo: String,
    pub nrmse: f64,
    pub support_miss: usize,
    pub support_extra: usize,
    pub wall_ms: f64,
}

/// Writes one record per frame. `t0` is the time index of the first frame.
pub fn write_trace<W: Write>(
    mut w: W,
    algo: Algorithm,
    t0: usize,
    result: &SequenceResult,
    truth: &[DVector<f64>],
    true_supports: &[SupportSet],
) -> Result<()> {
    let errs = result.relative_errors(truth);
    for k in 0..result.xhat.len() {
        let rec = TraceRecord {
            t: t0 + k,
            algo: algo.name().to_string(),
            nrmse: errs[k],
            support_miss: true_supports[k].difference(&result.supports[k]).len(),
            support_extra: result.supports[k].difference(&true_supports[k]).len(),
            wall_ms: result.wall_ms[k],
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("cosamp".parse::<Algorithm>().is_err());
    }

    #[test]
    fn zero_first_frame() {
        let a = DMatrix::<f64>::identity(4, 4);
        let (x, s, alpha) = init_first_frame(&DVector::zeros(4), &a, 0.1, &AlphaRule::default(), &SolverOptions::default()).unwrap();
        assert_eq!(x, DVector::zeros(4));
        assert!(s.is_empty());
        assert_eq!(alpha, 0.0);
    }

    #[test]
    fn initial_gamma_rules() {
        let a = DMatrix::<f64>::identity(4, 4);
        let y = DVector::from_vec(vec![100.0, 0.0, 0.0, 0.0]);
        assert_eq!(initial_gamma(&a, &[&y], 0.1, NoiseScale::SqrtM), 1.0);
        assert!((initial_gamma(&a, &[&y], 10.0, NoiseScale::SqrtLogM) - 10.0 * 4f64.ln().sqrt()).abs() < 1e-12);
    }
}
