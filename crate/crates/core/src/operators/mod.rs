//! Measurement operators, support sets and brute-force isometry constants.

mod fourier;
mod rip;
mod wavelet;

use std::borrow::Cow;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use fourier::{frequency_radius, PartialFourierWavelet};
pub use rip::{
    nsp_falsify, partial_ric_bruteforce, ric_bruteforce, roc_bruteforce, NspReport, SUBSET_LIMIT,
};
pub use wavelet::Wavelet2d;

/// Sorted, duplicate-free set of indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SupportSet(Vec<usize>);

impl SupportSet {
    pub fn new<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        SupportSet(v)
    }

    pub fn empty() -> Self {
        SupportSet(Vec::new())
    }

    pub fn full(m: usize) -> Self {
        SupportSet((0..m).collect())
    }

    /// Indices of nonzero entries.
    pub fn of_nonzeros(x: &DVector<f64>) -> Self {
        SupportSet(x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn union(&self, other: &SupportSet) -> SupportSet {
        SupportSet::new(self.iter().chain(other.iter()))
    }

    pub fn intersection(&self, other: &SupportSet) -> SupportSet {
        SupportSet(self.iter().filter(|&i| other.contains(i)).collect())
    }

    pub fn difference(&self, other: &SupportSet) -> SupportSet {
        SupportSet(self.iter().filter(|&i| !other.contains(i)).collect())
    }

    pub fn complement(&self, m: usize) -> SupportSet {
        SupportSet((0..m).filter(|&i| !self.contains(i)).collect())
    }

    /// 0/1 membership mask of length `m`.
    pub fn mask(&self, m: usize) -> Vec<bool> {
        let mut out = vec![false; m];
        for i in self.iter() {
            if i < m {
                out[i] = true;
            }
        }
        out
    }

    pub(crate) fn check_within(&self, m: usize) -> Result<()> {
        match self.max_index() {
            Some(i) if i >= m => Err(Error::Dimension(format!("support index {i} outside 0..{m}"))),
            _ => Ok(()),
        }
    }
}

impl FromIterator<usize> for SupportSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        SupportSet::new(iter)
    }
}

/// Restricted isometry (and optionally orthogonality) constant of a given order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub s: usize,
    pub delta: f64,
    pub theta: Option<f64>,
    /// True when obtained by exhaustive enumeration.
    pub exact: bool,
}

/// Linear measurement map `y = A x`.
#[derive(Clone, Debug)]
pub enum MeasurementOperator {
    Dense(DMatrix<f64>),
    PartialFourier(PartialFourierWavelet),
}

impl MeasurementOperator {
    pub fn nrows(&self) -> usize {
        match self {
            MeasurementOperator::Dense(a) => a.nrows(),
            MeasurementOperator::PartialFourier(p) => p.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            MeasurementOperator::Dense(a) => a.ncols(),
            MeasurementOperator::PartialFourier(p) => p.ncols(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        linalg::check_len("apply input", x.len(), self.ncols())?;
        Ok(match self {
            MeasurementOperator::Dense(a) => a * x,
            MeasurementOperator::PartialFourier(p) => p.apply(x),
        })
    }

    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        linalg::check_len("adjoint input", y.len(), self.nrows())?;
        Ok(match self {
            MeasurementOperator::Dense(a) => a.tr_mul(y),
            MeasurementOperator::PartialFourier(p) => p.adjoint(y),
        })
    }

    pub fn column(&self, i: usize) -> Result<DVector<f64>> {
        if i >= self.ncols() {
            return Err(Error::Dimension(format!("column {i} outside 0..{}", self.ncols())));
        }
        Ok(match self {
            MeasurementOperator::Dense(a) => a.column(i).into_owned(),
            MeasurementOperator::PartialFourier(p) => {
                let mut e = DVector::zeros(p.ncols());
                e[i] = 1.0;
                p.apply(&e)
            }
        })
    }

    /// Explicit matrix; cached for the Fourier form.
    pub fn matrix(&self) -> Cow<'_, DMatrix<f64>> {
        match self {
            MeasurementOperator::Dense(a) => Cow::Borrowed(a),
            MeasurementOperator::PartialFourier(p) => Cow::Borrowed(p.matrix()),
        }
    }

    /// Reads whitespace-separated rows; blank lines and `#` comments are skipped.
    pub fn from_text_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(MeasurementOperator::Dense(parse_dense_text(&text)?))
    }
}

pub fn parse_dense_text(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1))))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "line {}: {} entries, expected {}",
                    ln + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no rows".into()));
    }
    let (n, m) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, m, |r, c| rows[r][c]))
}

/// Returns `(A D, d)` with `D = diag(d)`, `d_i = 1 / ||A_i||`.
pub fn normalize_columns(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut d = DVector::zeros(a.ncols());
    let mut out = a.clone();
    for i in 0..a.ncols() {
        let nrm = a.column(i).norm();
        if nrm == 0.0 {
            return Err(Error::ZeroColumn { index: i });
        }
        d[i] = 1.0 / nrm;
        out.column_mut(i).scale_mut(d[i]);
    }
    Ok((out, d))
}

/// `A_T^dagger` (`|T| x n`); errors when `sigma_min < 1e-8 sigma_max`.
pub fn pseudo_inverse_on_support(a: &DMatrix<f64>, t: &SupportSet) -> Result<DMatrix<f64>> {
    t.check_within(a.ncols())?;
    if t.is_empty() {
        return Ok(DMatrix::zeros(0, a.nrows()));
    }
    let at = linalg::columns(a, t.indices());
    let sv = linalg::singular_values(&at);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = if t.len() > a.nrows() { 0.0 } else { sv.last().copied().unwrap_or(0.0) };
    if smin < 1e-8 * smax || smax == 0.0 {
        return Err(Error::RankDeficient { sigma_min: smin, sigma_max: smax });
    }
    Ok(linalg::pinv(&at, 0.0))
}

/// Least squares on `T`, zero elsewhere: `I_T A_T^dagger y`.
pub fn ls_on_support(a: &DMatrix<f64>, y: &DVector<f64>, t: &SupportSet) -> Result<DVector<f64>> {
    let p = pseudo_inverse_on_support(a, t)?;
    Ok(linalg::scatter(a.ncols(), t.indices(), &(p * y)))
}
