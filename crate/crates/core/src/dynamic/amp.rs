//! DCS-AMP in filtering mode for real signals, with EM learning of the
//! Bernoulli-Gaussian-AR prior.
//!
//! Each coefficient is `x = s * theta`, `s` a two-state Markov chain and
//! `theta` a stationary AR(1) process around `zeta`. Messages flow forward in
//! time only: the backward activity message is fixed at `1/2` and the
//! backward amplitude message has infinite variance, so the incoming
//! activity and amplitude messages of a frame equal the forward ones.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Frame;
use crate::error::{Error, Result};

const LOG_CLAMP: f64 = 700.0;

/// Prior parameters. `p01 = Pr(1 -> 0)`; `p10 = Pr(0 -> 1)` follows from stationarity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmpParams {
    pub lambda: f64,
    pub p01: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub rho: f64,
    pub sigma_e2: f64,
}

impl AmpParams {
    pub fn p10(&self) -> f64 {
        if self.lambda >= 1.0 {
            return 1.0;
        }
        self.lambda * self.p01 / (1.0 - self.lambda)
    }

    /// Stationary variance of `theta`: `alpha rho / (2 - alpha)`.
    pub fn theta_var(&self) -> f64 {
        self.alpha * self.rho / (2.0 - self.alpha)
    }

    /// Starting point for EM: 10% activity, slow changes, SNR 100.
    pub fn initial_guess(frames: &[Frame]) -> Result<AmpParams> {
        if frames.is_empty() {
            return Err(Error::InvalidParameter("no frames".into()));
        }
        let (lambda, alpha, snr) = (0.1, 0.1, 100.0);
        let mut e2 = 0.0;
        let mut var = 0.0;
        for f in frames {
            let m = f.y.len() as f64;
            let ey = f.y.norm_squared();
            let s2 = ey / (m * (snr + 1.0));
            e2 += s2;
            var += ((ey - m * s2) / (f.a.norm_squared() * lambda)).max(1e-12);
        }
        let k = frames.len() as f64;
        let (sigma_e2, theta_var) = ((e2 / k).max(1e-12), var / k);
        Ok(AmpParams { lambda, p01: 0.05, zeta: 0.0, alpha, rho: theta_var * (2.0 - alpha) / alpha, sigma_e2 })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.lambda)
            && (0.0..=1.0).contains(&self.p01)
            && self.alpha > 0.0
            && self.alpha <= 1.0
            && self.rho > 0.0
            && self.sigma_e2 > 0.0
            && self.zeta.is_finite()
            && self.p10() <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid DCS-AMP parameters {self:?}")))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmpConfig {
    /// AMP iterations per frame.
    pub iters: usize,
    /// Inflation of uninformative outgoing amplitude messages.
    pub eps: f64,
    /// Incoming activity above which the outgoing amplitude message is kept.
    pub tau: f64,
    pub em_iters: usize,
    /// Fixed parameters; learned by EM from [`AmpParams::initial_guess`] when absent.
    pub params: Option<AmpParams>,
}

impl Default for AmpConfig {
    fn default() -> Self {
        AmpConfig { iters: 25, eps: 1e-7, tau: 0.99, em_iters: 10, params: None }
    }
}

/// Posterior mean `F`, variance `G` and `ln gamma` of a Bernoulli-Gaussian
/// coefficient observed as `phi = x + N(0, c)`, with activity prior `pi`
/// and Gaussian slab `N(xi, psi)`. `ln gamma` is clamped to `[-700, 700]`.
pub fn bg_denoise(phi: f64, c: f64, pi: f64, psi: f64, xi: f64) -> (f64, f64, f64) {
    let log_odds = ((1.0 - pi) / pi).ln();
    let log_gamma = (log_odds + evidence_log_ratio(phi, c, psi, xi)).clamp(-LOG_CLAMP, LOG_CLAMP);
    let q = 1.0 / (1.0 + log_gamma.exp());
    let mean = (psi * phi + xi * c) / (psi + c);
    let var = psi * c / (psi + c);
    (q * mean, q * var + q * (1.0 - q) * mean * mean, log_gamma)
}

/// `ln N(phi; 0, c) - ln N(phi; xi, psi + c)`.
fn evidence_log_ratio(phi: f64, c: f64, psi: f64, xi: f64) -> f64 {
    0.5 * ((psi + c) / c).ln() - (psi * phi * phi + 2.0 * xi * c * phi - c * xi * xi) / (2.0 * c * (psi + c))
}

/// Forward messages into the next frame plus everything the last frame produced.
#[derive(Clone, Debug)]
pub struct AmpState {
    pub t: usize,
    pub params: AmpParams,
    pub lambda_fwd: Vec<f64>,
    pub eta_fwd: Vec<f64>,
    pub kappa_fwd: Vec<f64>,
    /// Incoming messages of the last frame.
    pub pi_in: Vec<f64>,
    pub xi_in: Vec<f64>,
    pub psi_in: Vec<f64>,
    /// Outgoing messages of the last frame.
    pub pi_out: Vec<f64>,
    pub xi_out: Vec<f64>,
    pub psi_out: Vec<f64>,
    /// Final AMP iterate of the last frame.
    pub mu: DVector<f64>,
    pub v: DVector<f64>,
    pub c: f64,
    pub z: DVector<f64>,
}

impl AmpState {
    pub fn new(params: AmpParams, n: usize) -> Self {
        let s2 = params.theta_var();
        AmpState {
            t: 0,
            lambda_fwd: vec![params.lambda; n],
            eta_fwd: vec![params.zeta; n],
            kappa_fwd: vec![s2; n],
            params,
            pi_in: vec![0.0; n],
            xi_in: vec![0.0; n],
            psi_in: vec![0.0; n],
            pi_out: vec![0.0; n],
            xi_out: vec![0.0; n],
            psi_out: vec![0.0; n],
            mu: DVector::zeros(n),
            v: DVector::zeros(n),
            c: 0.0,
            z: DVector::zeros(0),
        }
    }

    pub fn check_messages(&self) -> bool {
        let unit = |v: &[f64]| v.iter().all(|p| (0.0..=1.0).contains(p));
        unit(&self.lambda_fwd)
            && unit(&self.pi_in)
            && unit(&self.pi_out)
            && self.kappa_fwd.iter().all(|&k| k >= 0.0)
            && self.psi_out.iter().all(|&k| k >= 0.0)
            && self.v.iter().all(|&k| k >= 0.0)
    }
}

/// Per-frame quantities needed by EM.
#[derive(Clone, Debug)]
pub struct AmpFrameStats {
    pub lambda_fwd: Vec<f64>,
    pub eta_fwd: Vec<f64>,
    pub kappa_fwd: Vec<f64>,
    pub pi_out: Vec<f64>,
    pub xi_out: Vec<f64>,
    pub psi_out: Vec<f64>,
    /// `||y - A mu||^2`.
    pub resid2: f64,
    /// `sum_n v_n`.
    pub sum_v: f64,
    pub rows: usize,
}

/// One frame: combine incoming messages, run AMP, emit outgoing messages and
/// propagate them to the next frame.
pub fn dcs_amp_filter_step(
    state: &AmpState,
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    cfg: &AmpConfig,
) -> Result<(AmpState, AmpFrameStats)> {
    let (m_rows, n) = (a.nrows(), a.ncols());
    if y.len() != m_rows || state.lambda_fwd.len() != n {
        return Err(Error::Dimension(format!(
            "frame is {}x{} with {} measurements; state has {} coefficients",
            m_rows,
            n,
            y.len(),
            state.lambda_fwd.len()
        )));
    }
    let prm = &state.params;
    // (into)
    let pi_in = state.lambda_fwd.clone();
    let psi_in = state.kappa_fwd.clone();
    let xi_in = state.eta_fwd.clone();

    // (within)
    let mut z = y.clone();
    let mut mu = DVector::zeros(n);
    let mut v = DVector::zeros(n);
    let mut c = 100.0 * psi_in.iter().sum::<f64>();
    let mut phi = DVector::zeros(n);
    for _ in 0..cfg.iters {
        phi = a.tr_mul(&z) + &mu;
        let mut deriv_sum = 0.0;
        for k in 0..n {
            let (f, g, _) = bg_denoise(phi[k], c, pi_in[k], psi_in[k], xi_in[k]);
            mu[k] = f;
            v[k] = g;
            deriv_sum += g / c;
        }
        let c_next = prm.sigma_e2 + v.sum() / m_rows as f64;
        z = y - a * &mu + &z * (deriv_sum / m_rows as f64);
        c = c_next;
        if !c.is_finite() {
            return Err(Error::Numerical("AMP variance diverged".into()));
        }
    }

    // (out)
    let mut pi_out = vec![0.0; n];
    let mut xi_out = vec![0.0; n];
    let mut psi_out = vec![0.0; n];
    for k in 0..n {
        let llr = evidence_log_ratio(phi[k], c, psi_in[k], xi_in[k]).clamp(-LOG_CLAMP, LOG_CLAMP);
        pi_out[k] = 1.0 / (1.0 + llr.exp());
        if pi_in[k] <= cfg.tau {
            xi_out[k] = phi[k] / cfg.eps;
            psi_out[k] = c / (cfg.eps * cfg.eps);
        } else {
            xi_out[k] = phi[k];
            psi_out[k] = c;
        }
    }

    // (across)
    let (alpha, p01, p10) = (prm.alpha, prm.p01, prm.p10());
    let mut lambda_next = vec![0.0; n];
    let mut eta_next = vec![0.0; n];
    let mut kappa_next = vec![0.0; n];
    for k in 0..n {
        let (l, p) = (state.lambda_fwd[k], pi_out[k]);
        let den = (1.0 - l) * (1.0 - p) + l * p;
        let post = if den > 0.0 { l * p / den } else { l };
        lambda_next[k] = (p10 * (1.0 - post) + (1.0 - p01) * post).clamp(0.0, 1.0);
        let (kap, psi) = (state.kappa_fwd[k], psi_out[k]);
        let (var, mean) = combine(state.eta_fwd[k], kap, xi_out[k], psi);
        eta_next[k] = (1.0 - alpha) * mean + alpha * prm.zeta;
        kappa_next[k] = (1.0 - alpha).powi(2) * var + alpha * alpha * prm.rho;
    }

    let resid2 = (y - a * &mu).norm_squared();
    let stats = AmpFrameStats {
        lambda_fwd: state.lambda_fwd.clone(),
        eta_fwd: state.eta_fwd.clone(),
        kappa_fwd: state.kappa_fwd.clone(),
        pi_out: pi_out.clone(),
        xi_out: xi_out.clone(),
        psi_out: psi_out.clone(),
        resid2,
        sum_v: v.sum(),
        rows: m_rows,
    };
    let next = AmpState {
        t: state.t + 1,
        params: prm.clone(),
        lambda_fwd: lambda_next,
        eta_fwd: eta_next,
        kappa_fwd: kappa_next,
        pi_in,
        xi_in,
        psi_in,
        pi_out,
        xi_out,
        psi_out,
        mu,
        v,
        c,
        z,
    };
    Ok((next, stats))
}

/// Product of Gaussian messages `N(m1, v1) N(m2, v2)`: `(variance, mean)`.
fn combine(m1: f64, v1: f64, m2: f64, v2: f64) -> (f64, f64) {
    if v2.is_infinite() {
        return (v1, m1);
    }
    let var = v1 * v2 / (v1 + v2);
    (var, var * (m1 / v1 + m2 / v2))
}

/// One filtering pass with fixed parameters: estimates and EM statistics.
pub fn dcs_amp_run(frames: &[Frame], params: &AmpParams, cfg: &AmpConfig) -> Result<(Vec<DVector<f64>>, Vec<AmpFrameStats>)> {
    params.validate()?;
    let n = frames.first().map(|f| f.a.ncols()).unwrap_or(0);
    let mut state = AmpState::new(params.clone(), n);
    let mut xs = Vec::with_capacity(frames.len());
    let mut stats = Vec::with_capacity(frames.len());
    for f in frames {
        let (next, st) = dcs_amp_filter_step(&state, &f.y, f.a, cfg)?;
        xs.push(next.mu.clone());
        stats.push(st);
        state = next;
    }
    Ok((xs, stats))
}

#[derive(Clone, Debug)]
pub struct EmOutcome {
    pub params: AmpParams,
    /// Set when the AR coefficient update had no real root and was skipped.
    pub alpha_kept: bool,
}

/// Activity posterior from forward messages (the backward message is `1/2`).
fn activity(lambda: f64, pi: f64) -> f64 {
    let den = lambda * pi + (1.0 - lambda) * (1.0 - pi);
    if den > 0.0 {
        lambda * pi / den
    } else {
        lambda
    }
}

/// One EM update of all prior parameters from a filtering pass. Pairwise
/// moments between consecutive frames come from a one-step smoother.
/// With a single frame only `lambda` and `sigma_e2` change.
pub fn dcs_amp_em_update(params: &AmpParams, history: &[AmpFrameStats]) -> EmOutcome {
    let t_len = history.len();
    if t_len == 0 {
        return EmOutcome { params: params.clone(), alpha_kept: false };
    }
    let n = history[0].pi_out.len();
    let nf = n as f64;
    let (alpha, rho, zeta, p01, p10) = (params.alpha, params.rho, params.zeta, params.p01, params.p10());
    let mut out = params.clone();

    // Filtered activity and amplitude posteriors.
    let q: Vec<Vec<f64>> =
        history.iter().map(|h| (0..n).map(|k| activity(h.lambda_fwd[k], h.pi_out[k])).collect()).collect();
    let post: Vec<Vec<(f64, f64)>> = history
        .iter()
        .map(|h| (0..n).map(|k| combine(h.eta_fwd[k], h.kappa_fwd[k], h.xi_out[k], h.psi_out[k])).collect())
        .collect();

    out.lambda = q[0].iter().sum::<f64>() / nf;

    let rows: f64 = history.iter().map(|h| h.rows as f64).sum();
    let e: f64 = history.iter().map(|h| h.resid2 + h.sum_v).sum();
    out.sigma_e2 = (e / rows).max(1e-12);

    if t_len < 2 {
        return EmOutcome { params: out, alpha_kept: false };
    }

    let (mut trans_num, mut trans_den) = (0.0, 0.0);
    let (mut b, mut c, mut rho_sum, mut zeta_sum) = (0.0, 0.0, 0.0, 0.0);
    for t in 1..t_len {
        for k in 0..n {
            let qp = q[t - 1][k];
            let l1 = history[t].pi_out[k];
            let w11 = qp * (1.0 - p01) * l1;
            let w10 = qp * p01 * (1.0 - l1);
            let w01 = (1.0 - qp) * p10 * l1;
            let w00 = (1.0 - qp) * (1.0 - p10) * (1.0 - l1);
            let zsum = w11 + w10 + w01 + w00;
            if zsum > 0.0 {
                let es_prev = (w11 + w10) / zsum;
                trans_num += es_prev - w11 / zsum;
                trans_den += es_prev;
            }

            let (v0, m0) = post[t - 1][k];
            let (v1, m1) = post[t][k];
            let pred_var = (1.0 - alpha).powi(2) * v0 + alpha * alpha * rho;
            let pred_mean = (1.0 - alpha) * m0 + alpha * zeta;
            let gain = v0 * (1.0 - alpha) / pred_var;
            let m_smooth = m0 + gain * (m1 - pred_mean);
            let cross = gain * v1 + m1 * m_smooth;
            let (sq1, sq0) = (v1 + m1 * m1, v0 + m0 * m0);

            b += cross - (m1 - m0) * zeta - sq0;
            c += sq1 + sq0 - 2.0 * cross;
            rho_sum += sq1 + alpha * alpha * zeta * zeta - 2.0 * (1.0 - alpha) * cross - 2.0 * alpha * m1 * zeta
                + 2.0 * alpha * (1.0 - alpha) * m0 * zeta
                + (1.0 - alpha).powi(2) * sq0;
            zeta_sum += m1 - (1.0 - alpha) * m0;
        }
    }
    if trans_den > 0.0 {
        out.p01 = (trans_num / trans_den).clamp(0.0, 1.0);
    }
    let pairs = nf * (t_len - 1) as f64;
    let s2 = params.theta_var();
    let first_sum: f64 = post[0].iter().map(|&(_, m)| m).sum();
    out.zeta = (first_sum / s2 + zeta_sum / (alpha * rho)) / (pairs / rho + nf / s2);

    let (b, c) = (2.0 * b / rho, 2.0 * c / rho);
    let disc = b * b + 8.0 * pairs * c;
    let mut alpha_kept = false;
    if disc >= 0.0 && disc.is_finite() {
        out.alpha = ((b + disc.sqrt()) / (4.0 * pairs)).clamp(1e-6, 1.0);
    } else {
        alpha_kept = true;
    }
    out.rho = (rho_sum / (alpha * alpha * pairs)).max(1e-12);
    // Keep p10 a probability under the new lambda.
    if out.lambda < 1.0 && out.lambda > 0.0 {
        out.p01 = out.p01.min((1.0 - out.lambda) / out.lambda);
    }
    EmOutcome { params: out, alpha_kept }
}

/// DCS-AMP over a whole sequence: `em_iters` EM passes (unless parameters
/// are fixed in `cfg`), then a final filtering pass.
pub fn run_dcs_amp(frames: &[Frame], cfg: &AmpConfig) -> Result<(Vec<DVector<f64>>, AmpParams)> {
    let (mut params, learn) = match &cfg.params {
        Some(p) => (p.clone(), false),
        None => (AmpParams::initial_guess(frames)?, true),
    };
    if learn {
        for _ in 0..cfg.em_iters {
            let (_, stats) = dcs_amp_run(frames, &params, cfg)?;
            params = dcs_amp_em_update(&params, &stats).params;
        }
    }
    let (xs, _) = dcs_amp_run(frames, &params, cfg)?;
    Ok((xs, params))
}

/// Bernoulli-Gaussian-AR sequence with an i.i.d. `N(0, 1/M)` matrix per frame.
#[derive(Clone, Debug)]
pub struct BgArSequence {
    pub x: Vec<DVector<f64>>,
    pub a: Vec<DMatrix<f64>>,
    pub y: Vec<DVector<f64>>,
    pub params: AmpParams,
}

impl BgArSequence {
    pub fn frames(&self) -> Vec<Frame<'_>> {
        self.y.iter().zip(&self.a).map(|(y, a)| Frame { y: y.clone(), a }).collect()
    }
}

pub fn generate_bg_ar_sequence(rows: usize, n: usize, t_len: usize, params: &AmpParams, seed: u64) -> Result<BgArSequence> {
    params.validate()?;
    let mut rng = crate::simulation::rng(seed);
    let gauss = move |r: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(r) };
    let s2 = params.theta_var();
    let (p01, p10) = (params.p01, params.p10());
    let mut s: Vec<bool> = (0..n).map(|_| rng.gen_bool(params.lambda)).collect();
    let mut theta: Vec<f64> = (0..n).map(|_| params.zeta + s2.sqrt() * gauss(&mut rng)).collect();
    let scale = 1.0 / (rows as f64).sqrt();
    let (mut xs, mut as_, mut ys) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..t_len {
        if t > 0 {
            for k in 0..n {
                s[k] = if s[k] { !rng.gen_bool(p01) } else { rng.gen_bool(p10) };
                theta[k] = params.zeta + (1.0 - params.alpha) * (theta[k] - params.zeta)
                    + params.alpha * params.rho.sqrt() * gauss(&mut rng);
            }
        }
        let x = DVector::from_fn(n, |k, _| if s[k] { theta[k] } else { 0.0 });
        let a = DMatrix::from_fn(rows, n, |_, _| scale * gauss(&mut rng));
        let w = DVector::from_fn(rows, |_, _| params.sigma_e2.sqrt() * gauss(&mut rng));
        ys.push(&a * &x + w);
        xs.push(x);
        as_.push(a);
    }
    Ok(BgArSequence { x: xs, a: as_, y: ys, params: params.clone() })
}
