//! Support estimation by thresholding, with automatic threshold selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::{ls_on_support, SupportSet};

/// `{ i : |x_i| > alpha }`.
pub fn threshold_simple(x: &DVector<f64>, alpha: f64) -> SupportSet {
    SupportSet::new((0..x.len()).filter(|&i| x[i].abs() > alpha))
}

#[derive(Clone, Debug)]
pub struct AddLsDel {
    pub t_add: SupportSet,
    pub x_add: DVector<f64>,
    pub support: SupportSet,
    pub xhat: DVector<f64>,
}

/// Add (threshold `alpha_add` on top of `t_prev`), least squares, delete
/// (threshold `alpha_del` on the LS estimate), least squares again.
pub fn add_ls_del(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    x_modcs: &DVector<f64>,
    t_prev: &SupportSet,
    alpha_add: f64,
    alpha_del: f64,
) -> Result<AddLsDel> {
    let t_add = t_prev.union(&threshold_simple(x_modcs, alpha_add));
    let x_add = ls_on_support(a, y, &t_add)?;
    let support = t_add.difference(&SupportSet::new(t_add.iter().filter(|&i| x_add[i].abs() <= alpha_del)));
    let xhat = ls_on_support(a, y, &support)?;
    Ok(AddLsDel { t_add, x_add, support, xhat })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaRule {
    /// Energy fraction retained by the sparsified estimate.
    pub energy: f64,
    /// Divisor applied to the smallest retained magnitude.
    pub divisor: f64,
}

impl Default for AlphaRule {
    fn default() -> Self {
        AlphaRule { energy: 0.999, divisor: 12.0 }
    }
}

/// Smallest magnitude kept when `x` is sparsified to `rule.energy` of its
/// energy, divided by `rule.divisor`. Returns `(alpha, alpha0)`.
pub fn auto_alpha(x: &DVector<f64>, rule: &AlphaRule) -> (f64, f64) {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).filter(|v| *v > 0.0).collect();
    if mags.is_empty() {
        return (0.0, 0.0);
    }
    mags.sort_by(|p, q| q.total_cmp(p));
    let total: f64 = mags.iter().map(|v| v * v).sum();
    let mut acc = 0.0;
    let mut alpha0 = *mags.last().unwrap();
    for &v in &mags {
        acc += v * v;
        if acc >= rule.energy * total {
            alpha0 = v;
            break;
        }
    }
    (alpha0 / rule.divisor, alpha0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AddDelRule {
    /// Required smallest singular value of `A_{T_add}`.
    pub sigma_target: f64,
    /// Factor on the smallest previous magnitude for the deletion threshold.
    pub del_factor: f64,
}

impl Default for AddDelRule {
    fn default() -> Self {
        AddDelRule { sigma_target: 0.4, del_factor: 0.7 }
    }
}

/// Automatic `(alpha_add, alpha_del)`: the add threshold admits candidates in
/// decreasing magnitude while `A_{T_add}` stays well conditioned; the delete
/// threshold is a fraction of the smallest previous magnitude minus an
/// estimate of the LS error on `T_add`.
pub fn auto_alpha_add_del(
    y: &DVector<f64>,
    a: &DMatrix<f64>,
    x_modcs: &DVector<f64>,
    t_prev: &SupportSet,
    x_prev: &DVector<f64>,
    rule: &AddDelRule,
) -> Result<(f64, f64)> {
    let m = a.ncols();
    t_prev.check_within(m)?;
    let base = linalg::sigma_min(&linalg::columns(a, t_prev.indices()));
    if base < rule.sigma_target {
        return Err(Error::InvalidParameter(format!(
            "previous support alone has sigma_min {base:.3e} below target {}",
            rule.sigma_target
        )));
    }
    let mut cand: Vec<usize> = (0..m).filter(|&i| !t_prev.contains(i) && x_modcs[i] != 0.0).collect();
    cand.sort_by(|&i, &j| x_modcs[j].abs().total_cmp(&x_modcs[i].abs()).then(i.cmp(&j)));
    let mut admitted: Vec<usize> = t_prev.indices().to_vec();
    let mut alpha_add = 0.0;
    let mut k = 0;
    while k < cand.len() {
        // Entries of equal magnitude are admitted or rejected together.
        let mag = x_modcs[cand[k]].abs();
        let mut group = vec![cand[k]];
        while k + group.len() < cand.len() && x_modcs[cand[k + group.len()]].abs() == mag {
            group.push(cand[k + group.len()]);
        }
        let mut trial = admitted.clone();
        trial.extend(&group);
        trial.sort_unstable();
        if linalg::sigma_min(&linalg::columns(a, &trial)) < rule.sigma_target {
            alpha_add = mag;
            break;
        }
        admitted = trial;
        k += group.len();
    }
    let t_add = SupportSet::new(admitted);
    let x_min = t_prev.iter().map(|i| x_prev[i].abs()).fold(f64::INFINITY, f64::min);
    let x_min = if x_min.is_finite() { x_min } else { 0.0 };
    let pinv = crate::operators::pseudo_inverse_on_support(a, &t_add)?;
    let err = linalg::norm_inf(&(pinv * (y - a * x_modcs)));
    let alpha_del = (rule.del_factor * x_min - err).max(0.0);
    Ok((alpha_add, alpha_del))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_threshold_is_strict() {
        let x = DVector::from_vec(vec![0.5, -0.5, 0.51, 0.0]);
        assert_eq!(threshold_simple(&x, 0.5).indices(), &[2]);
        assert!(threshold_simple(&DVector::zeros(4), 0.0).is_empty());
    }

    #[test]
    fn alpha_for_single_spike() {
        let mut x = DVector::zeros(10);
        x[3] = 1.0;
        let (alpha, alpha0) = auto_alpha(&x, &AlphaRule::default());
        assert_eq!(alpha0, 1.0);
        assert!((alpha - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_energy_cut() {
        // Energies 100, 1, 0.01: 99.9% of 101.01 needs the first two entries.
        let x = DVector::from_vec(vec![10.0, 0.0, -1.0, 0.1]);
        let (_, alpha0) = auto_alpha(&x, &AlphaRule::default());
        assert_eq!(alpha0, 1.0);
    }

    #[test]
    fn add_ls_del_zero_thresholds_keep_nonzeros() {
        let a = DMatrix::<f64>::identity(5, 5);
        let x = DVector::from_vec(vec![1.0, 0.0, 2.0, 0.0, 0.0]);
        let r = add_ls_del(&x, &a, &x, &SupportSet::empty(), 0.0, 0.0).unwrap();
        assert_eq!(r.support.indices(), &[0, 2]);
        assert!((r.xhat - &x).norm() < 1e-14);
    }

    #[test]
    fn orthonormal_admits_every_candidate() {
        let a = DMatrix::<f64>::identity(6, 6);
        let x = DVector::from_vec(vec![1.0, 0.3, 0.0, -2.0, 0.1, 0.0]);
        let prev = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (add, del) =
            auto_alpha_add_del(&x, &a, &x, &SupportSet::new([0]), &prev, &AddDelRule::default()).unwrap();
        assert_eq!(add, 0.0);
        assert!((del - 0.7).abs() < 1e-14);
    }

    #[test]
    fn ill_conditioned_prior_is_rejected() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 1e-3, 1.0]);
        let x = DVector::zeros(3);
        let r = auto_alpha_add_del(&x.rows(0, 2).into_owned(), &a, &x, &SupportSet::new([0, 1]), &x, &AddDelRule::default());
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn thresholding_monotone(v in proptest::collection::vec(-5.0f64..5.0, 1..30), a1 in 0.0f64..3.0, d in 0.0f64..2.0) {
            let x = DVector::from_vec(v);
            let lo = threshold_simple(&x, a1);
            let hi = threshold_simple(&x, a1 + d);
            prop_assert_eq!(hi.difference(&lo).len(), 0);
        }

        #[test]
        fn add_ls_del_support_within_t_add(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(12, 20, |_, _| rng.gen_range(-1.0..1.0));
            let x = DVector::from_fn(20, |_, _| if rng.gen_bool(0.2) { rng.gen_range(-2.0..2.0) } else { 0.0 });
            let y = &a * &x;
            let r = add_ls_del(&y, &a, &x, &SupportSet::empty(), 0.05, 0.05);
            if let Ok(r) = r {
                prop_assert_eq!(r.support.difference(&r.t_add).len(), 0);
            }
        }
    }
}
