//! Undersampled 2-D Fourier measurements of an image given by its wavelet coefficients.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::wavelet::Wavelet2d;
use crate::error::{Error, Result};

/// `A = H Phi`: `Phi` is the inverse 2-level wavelet transform, `H` keeps the
/// orthonormal-DFT rows listed in `samples`. Output is `(re; im)` of length `2|O|`.
#[derive(Clone)]
pub struct PartialFourierWavelet {
    wavelet: Wavelet2d,
    samples: Vec<usize>,
    row_fft: (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>),
    col_fft: (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>),
    dense: OnceLock<DMatrix<f64>>,
}

impl std::fmt::Debug for PartialFourierWavelet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PartialFourierWavelet")
            .field("wavelet", &self.wavelet)
            .field("samples", &self.samples.len())
            .finish()
    }
}

impl PartialFourierWavelet {
    pub fn new(rows: usize, cols: usize, levels: usize, mut samples: Vec<usize>) -> Result<Self> {
        let wavelet = Wavelet2d::new(rows, cols, levels).ok_or_else(|| {
            Error::InvalidParameter(format!("image {rows}x{cols} not divisible by 2^{levels}"))
        })?;
        samples.sort_unstable();
        samples.dedup();
        if let Some(&last) = samples.last() {
            if last >= rows * cols {
                return Err(Error::InvalidParameter(format!("frequency index {last} out of range")));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(PartialFourierWavelet {
            wavelet,
            samples,
            row_fft: (planner.plan_fft_forward(cols), planner.plan_fft_inverse(cols)),
            col_fft: (planner.plan_fft_forward(rows), planner.plan_fft_inverse(rows)),
            dense: OnceLock::new(),
        })
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.wavelet.rows, self.wavelet.cols)
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn wavelet(&self) -> &Wavelet2d {
        &self.wavelet
    }

    pub fn ncols(&self) -> usize {
        self.wavelet.rows * self.wavelet.cols
    }

    pub fn nrows(&self) -> usize {
        2 * self.samples.len()
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let (r, c) = (self.wavelet.rows, self.wavelet.cols);
        let rf = if inverse { &self.row_fft.1 } else { &self.row_fft.0 };
        let cf = if inverse { &self.col_fft.1 } else { &self.col_fft.0 };
        for row in data.chunks_mut(c) {
            rf.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); r];
        for j in 0..c {
            for i in 0..r {
                col[i] = data[i * c + j];
            }
            cf.process(&mut col);
            for i in 0..r {
                data[i * c + j] = col[i];
            }
        }
        let scale = 1.0 / ((r * c) as f64).sqrt();
        data.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut img: Vec<f64> = x.iter().copied().collect();
        self.wavelet.inverse(&mut img);
        let mut z: Vec<Complex64> = img.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut z, false);
        let k = self.samples.len();
        let mut y = DVector::zeros(2 * k);
        for (j, &s) in self.samples.iter().enumerate() {
            y[j] = z[s].re;
            y[k + j] = z[s].im;
        }
        y
    }

    pub fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        let k = self.samples.len();
        let mut z = vec![Complex64::new(0.0, 0.0); self.ncols()];
        for (j, &s) in self.samples.iter().enumerate() {
            z[s] += Complex64::new(y[j], y[k + j]);
        }
        self.fft2(&mut z, true);
        let mut img: Vec<f64> = z.iter().map(|v| v.re).collect();
        self.wavelet.forward(&mut img);
        DVector::from_vec(img)
    }

    /// Dense `2|O| x m` matrix, built once from adjoint applications to unit vectors.
    pub fn matrix(&self) -> &DMatrix<f64> {
        self.dense.get_or_init(|| {
            let (n, m) = (self.nrows(), self.ncols());
            let mut a = DMatrix::zeros(n, m);
            let mut e = DVector::zeros(n);
            for r in 0..n {
                e[r] = 1.0;
                let row = self.adjoint(&e);
                for c in 0..m {
                    a[(r, c)] = row[c];
                }
                e[r] = 0.0;
            }
            a
        })
    }
}

/// Centered frequency magnitude `|k|` of flattened index `idx` on a `rows x cols` grid.
pub fn frequency_radius(idx: usize, rows: usize, cols: usize) -> f64 {
    let (i, j) = (idx / cols, idx % cols);
    let fi = if i <= rows / 2 { i as f64 } else { i as f64 - rows as f64 };
    let fj = if j <= cols / 2 { j as f64 } else { j as f64 - cols as f64 };
    (fi * fi + fj * fj).sqrt()
}
