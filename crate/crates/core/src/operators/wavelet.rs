//! Orthonormal periodic 2-D Daubechies wavelet transform (4 vanishing moments, 8 taps).

const DB4: [f64; 8] = [
    0.230_377_813_308_896_500_863,
    0.714_846_570_552_915_647_090,
    0.630_880_767_929_858_907_882,
    -0.027_983_769_416_859_854_211,
    -0.187_034_811_719_093_084_080,
    0.030_841_381_835_560_763_627,
    0.032_883_011_666_885_199_735,
    -0.010_597_401_785_069_032_105,
];

fn highpass() -> [f64; 8] {
    let mut g = [0.0; 8];
    for k in 0..8 {
        let s = if k % 2 == 0 { 1.0 } else { -1.0 };
        g[k] = s * DB4[7 - k];
    }
    g
}

/// One analysis step on `x` (even length): approximation then detail halves.
fn analyze(x: &[f64], out: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    let g = highpass();
    for i in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for k in 0..8 {
            let v = x[(2 * i + k) % n];
            a += DB4[k] * v;
            d += g[k] * v;
        }
        out[i] = a;
        out[half + i] = d;
    }
}

/// Transpose of `analyze`.
fn synthesize(c: &[f64], out: &mut [f64]) {
    let n = c.len();
    let half = n / 2;
    let g = highpass();
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..half {
        for k in 0..8 {
            let j = (2 * i + k) % n;
            out[j] += DB4[k] * c[i] + g[k] * c[half + i];
        }
    }
}

/// Image-to-coefficient transform of a row-major `rows x cols` image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wavelet2d {
    pub rows: usize,
    pub cols: usize,
    pub levels: usize,
}

impl Wavelet2d {
    pub fn new(rows: usize, cols: usize, levels: usize) -> Option<Self> {
        let div = 1usize << levels;
        if rows == 0 || cols == 0 || rows % div != 0 || cols % div != 0 {
            return None;
        }
        Some(Wavelet2d { rows, cols, levels })
    }

    fn pass(&self, data: &mut [f64], r: usize, c: usize, inverse: bool) {
        let f = if inverse { synthesize } else { analyze };
        let mut buf = vec![0.0; r.max(c)];
        let mut out = vec![0.0; r.max(c)];
        let do_rows = |data: &mut [f64], buf: &mut [f64], out: &mut [f64]| {
            for i in 0..r {
                buf[..c].copy_from_slice(&data[i * self.cols..i * self.cols + c]);
                f(&buf[..c], &mut out[..c]);
                data[i * self.cols..i * self.cols + c].copy_from_slice(&out[..c]);
            }
        };
        let do_cols = |data: &mut [f64], buf: &mut [f64], out: &mut [f64]| {
            for j in 0..c {
                for i in 0..r {
                    buf[i] = data[i * self.cols + j];
                }
                f(&buf[..r], &mut out[..r]);
                for i in 0..r {
                    data[i * self.cols + j] = out[i];
                }
            }
        };
        if inverse {
            do_cols(data, &mut buf, &mut out);
            do_rows(data, &mut buf, &mut out);
        } else {
            do_rows(data, &mut buf, &mut out);
            do_cols(data, &mut buf, &mut out);
        }
    }

    /// Forward transform (image -> coefficients), in place.
    pub fn forward(&self, data: &mut [f64]) {
        for l in 0..self.levels {
            self.pass(data, self.rows >> l, self.cols >> l, false);
        }
    }

    /// Inverse transform (coefficients -> image), in place.
    pub fn inverse(&self, data: &mut [f64]) {
        for l in (0..self.levels).rev() {
            self.pass(data, self.rows >> l, self.cols >> l, true);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_is_orthonormal() {
        let s: f64 = DB4.iter().sum();
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        for shift in 0..4 {
            let dot: f64 = (0..8 - 2 * shift).map(|k| DB4[k] * DB4[k + 2 * shift]).sum();
            let want = if shift == 0 { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-15, "shift {shift}: {dot}");
        }
    }

    #[test]
    fn perfect_reconstruction_and_energy() {
        let w = Wavelet2d::new(16, 8, 2).unwrap();
        let img: Vec<f64> = (0..128).map(|i| ((i * 37) % 17) as f64 - 8.0).collect();
        let mut c = img.clone();
        w.forward(&mut c);
        let e0: f64 = img.iter().map(|v| v * v).sum();
        let e1: f64 = c.iter().map(|v| v * v).sum();
        assert!((e0 - e1).abs() < 1e-10 * e0);
        w.inverse(&mut c);
        for (a, b) in img.iter().zip(&c) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_image_lives_in_coarsest_band() {
        let w = Wavelet2d::new(16, 16, 2).unwrap();
        let mut c = vec![3.0; 256];
        w.forward(&mut c);
        for i in 0..16 {
            for j in 0..16 {
                if i >= 4 || j >= 4 {
                    assert!(c[i * 16 + j].abs() < 1e-12);
                }
            }
        }
    }
}
