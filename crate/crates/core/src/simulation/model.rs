//! Sparse sequences with slowly changing support: elements are added at a
//! small magnitude, grow for a while, and leave by decaying to zero.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng;
use crate::error::{Error, Result};
use crate::operators::SupportSet;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalModelParams {
    pub m: usize,
    /// Maximum support size.
    pub s: usize,
    /// Maximum additions (and removals) per step.
    pub s_a: usize,
    /// Steps within which a decreasing element reaches zero.
    pub b: usize,
    /// Minimum number of growth steps after an addition.
    pub d_min: usize,
    pub a_min: f64,
    pub r_min: f64,
    pub t_len: usize,
    pub seed: u64,
    /// Support size at `t = 0` (defaults to `s`).
    pub s0: Option<usize>,
    /// Probability that a departure slot fires at a step.
    pub depart_prob: f64,
    /// Large-set elements keep growing until `a_min + 6 d_min r_min`; when
    /// false they stay constant once large.
    pub grow_large: bool,
}

impl Default for SignalModelParams {
    fn default() -> Self {
        SignalModelParams::experiment_preset(0)
    }
}

impl SignalModelParams {
    /// Settings of the simulated dynamic experiment.
    pub fn experiment_preset(seed: u64) -> Self {
        SignalModelParams {
            m: 256,
            s: 25,
            s_a: 1,
            b: 4,
            d_min: 2,
            a_min: 2.0,
            r_min: 1.0,
            t_len: 101,
            seed,
            s0: None,
            depart_prob: 0.5,
            grow_large: true,
        }
    }

    /// Large-set threshold `l = a_min + d_min r_min`.
    pub fn large_threshold(&self) -> f64 {
        self.a_min + self.d_min as f64 * self.r_min
    }

    fn cap(&self) -> f64 {
        self.a_min + 6.0 * self.d_min as f64 * self.r_min
    }

    pub fn validate(&self) -> Result<()> {
        if self.s + self.s_a > self.m {
            return Err(Error::InvalidParameter(format!("s + s_a = {} exceeds m = {}", self.s + self.s_a, self.m)));
        }
        if self.b == 0 || self.d_min == 0 || !(self.a_min > 0.0) || !(self.r_min > 0.0) || self.t_len == 0 {
            return Err(Error::InvalidParameter("b, d_min, a_min, r_min and t_len must be positive".into()));
        }
        if self.s0.unwrap_or(self.s) > self.s || !(0.0..=1.0).contains(&self.depart_prob) {
            return Err(Error::InvalidParameter("need s0 <= s and depart_prob in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// Element entered the support.
    Add,
    /// Element left the large set and started decaying.
    Depart,
    /// Element reached zero.
    Remove,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupportEvent {
    pub t: usize,
    pub index: usize,
    pub kind: EventKind,
}

/// An addition with its initial magnitude and the growth increments that followed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Addition {
    pub t: usize,
    pub index: usize,
    pub a: f64,
    /// `r_{j,t+1}, r_{j,t+2}, ...` while the element kept growing.
    pub rates: Vec<f64>,
}

impl Addition {
    /// Magnitude reached `d0` steps after the addition.
    pub fn magnitude_after(&self, d0: usize) -> f64 {
        self.a + self.rates.iter().take(d0).sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct SequenceTrace {
    pub x: Vec<DVector<f64>>,
    pub supports: Vec<SupportSet>,
    pub events: Vec<SupportEvent>,
    pub additions: Vec<Addition>,
}

impl SequenceTrace {
    /// `(|N_t \ N_{t-1}|, |N_{t-1} \ N_t|)` for `t >= 1`.
    pub fn change_sizes(&self) -> Vec<(usize, usize)> {
        self.supports.windows(2).map(|w| (w[1].difference(&w[0]).len(), w[0].difference(&w[1]).len())).collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum Phase {
    Off,
    Growing { steps: usize, addition: Option<usize> },
    Decaying { step: usize },
}

/// Generates a sequence obeying the slow-support-change model.
pub fn generate_model_sequence(p: &SignalModelParams) -> Result<SequenceTrace> {
    p.validate()?;
    let mut r = rng(p.seed);
    let ell = p.large_threshold();
    let cap = p.cap();
    let mut mag = vec![0.0; p.m];
    let mut sign = vec![1.0; p.m];
    let mut phase = vec![Phase::Off; p.m];
    let mut events = Vec::new();
    let mut additions: Vec<Addition> = Vec::new();

    let mut initial: Vec<usize> = (0..p.m).collect();
    initial.shuffle(&mut r);
    for &j in initial.iter().take(p.s0.unwrap_or(p.s)) {
        mag[j] = r.gen_range(ell..cap);
        sign[j] = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        phase[j] = Phase::Growing { steps: p.d_min, addition: None };
    }
    let snapshot = |mag: &[f64], sign: &[f64]| DVector::from_fn(p.m, |i, _| sign[i] * mag[i]);
    let mut x = vec![snapshot(&mag, &sign)];
    let mut supports = vec![SupportSet::of_nonzeros(&x[0])];

    for t in 1..p.t_len {
        let prev_support = supports[t - 1].clone();
        // Departures are drawn from the large set at t-1.
        let large: Vec<usize> = (0..p.m)
            .filter(|&j| matches!(phase[j], Phase::Growing { steps, .. } if steps >= p.d_min) && mag[j] > ell)
            .collect();
        let fired = (0..p.s_a).filter(|_| r.gen_bool(p.depart_prob)).count();
        let departing: Vec<usize> = large.choose_multiple(&mut r, fired.min(large.len())).copied().collect();

        for j in 0..p.m {
            match phase[j] {
                Phase::Off => {}
                Phase::Growing { steps, addition } => {
                    let still_new = steps < p.d_min || mag[j] <= ell;
                    if departing.contains(&j) {
                        continue;
                    }
                    if still_new || (p.grow_large && mag[j] <= cap) {
                        let rate = r.gen_range(p.r_min..2.0 * p.r_min);
                        mag[j] += rate;
                        if let Some(k) = addition {
                            additions[k].rates.push(rate);
                        }
                    }
                    phase[j] = Phase::Growing { steps: steps + 1, addition };
                }
                Phase::Decaying { step } => {
                    let step = step + 1;
                    mag[j] = ell * (p.b - step.min(p.b)) as f64 / p.b as f64;
                    if step >= p.b {
                        mag[j] = 0.0;
                        phase[j] = Phase::Off;
                        events.push(SupportEvent { t, index: j, kind: EventKind::Remove });
                    } else {
                        phase[j] = Phase::Decaying { step };
                    }
                }
            }
        }
        for &j in &departing {
            events.push(SupportEvent { t, index: j, kind: EventKind::Depart });
            if p.b == 1 {
                mag[j] = 0.0;
                phase[j] = Phase::Off;
                events.push(SupportEvent { t, index: j, kind: EventKind::Remove });
            } else {
                mag[j] = ell * (p.b - 1) as f64 / p.b as f64;
                phase[j] = Phase::Decaying { step: 1 };
            }
        }

        // Additions are decided from |N_{t-1}| and drawn from N_{t-1}^c.
        let room = p.s.saturating_sub(prev_support.len()).min(p.s_a);
        if room > 0 {
            let pool: Vec<usize> = (0..p.m).filter(|&j| !prev_support.contains(j)).collect();
            for &j in pool.choose_multiple(&mut r, room) {
                mag[j] = r.gen_range(p.a_min..2.0 * p.a_min);
                sign[j] = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
                phase[j] = Phase::Growing { steps: 0, addition: Some(additions.len()) };
                additions.push(Addition { t, index: j, a: mag[j], rates: Vec::new() });
                events.push(SupportEvent { t, index: j, kind: EventKind::Add });
            }
        }
        let xt = snapshot(&mag, &sign);
        supports.push(SupportSet::of_nonzeros(&xt));
        x.push(xt);
    }
    Ok(SequenceTrace { x, supports, events, additions })
}

/// Lists every violation of the model's invariants found in `trace`.
pub fn audit_trace(trace: &SequenceTrace, p: &SignalModelParams) -> Vec<String> {
    let mut bad = Vec::new();
    let tol = 1e-12;
    for (t, n) in trace.supports.iter().enumerate() {
        if n.len() > p.s {
            bad.push(format!("t={t}: |N_t| = {} > s", n.len()));
        }
        if SupportSet::of_nonzeros(&trace.x[t]) != *n {
            bad.push(format!("t={t}: recorded support differs from supp(x_t)"));
        }
    }
    for (k, (add, rem)) in trace.change_sizes().into_iter().enumerate() {
        if add > p.s_a || rem > p.s_a {
            bad.push(format!("t={}: {add} additions, {rem} removals exceed s_a", k + 1));
        }
    }
    let horizon = trace.x.len();
    for e in trace.events.iter().filter(|e| e.kind == EventKind::Depart) {
        let j = e.index;
        if trace.x[e.t][j].abs() >= p.large_threshold() {
            bad.push(format!("t={}: element {j} departed but is still large", e.t));
        }
        let zero_by = e.t + p.b - 1;
        if zero_by < horizon && trace.x[zero_by][j] != 0.0 {
            bad.push(format!("element {j} departing at {} is nonzero after {} steps", e.t, p.b));
        }
        for t in e.t..horizon.min(zero_by + 1) {
            if t > 0 && trace.x[t][j].abs() > trace.x[t - 1][j].abs() {
                bad.push(format!("element {j} grew while decaying at t={t}"));
            }
        }
    }
    for add in &trace.additions {
        let j = add.index;
        if add.t > 0 && trace.x[add.t - 1][j] != 0.0 {
            bad.push(format!("element {j} added at {} was already nonzero", add.t));
        }
        if add.a < p.a_min - tol {
            bad.push(format!("element {j} added below a_min"));
        }
        for t in add.t + 1..horizon.min(add.t + p.d_min + 1) {
            let step = trace.x[t][j].abs() - trace.x[t - 1][j].abs();
            if step < p.r_min - tol {
                bad.push(format!("element {j} grew by {step} < r_min at t={t}"));
            }
        }
    }
    bad
}
