//! Orthonormal 2D DCT-II applied band by band.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone)]
pub struct Dct2 {
    n: usize,
    /// Row `k` holds the `k`-th orthonormal DCT-II basis vector.
    basis: Array2<f64>,
}

impl Dct2 {
    pub fn new(n: usize) -> Self {
        let basis = Array2::from_shape_fn((n, n), |(k, i)| {
            let w = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            w * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos()
        });
        Self { n, basis }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Coefficients of every `n x n` band in a band-major vector.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.map_bands(x, |b| self.basis.dot(&b).dot(&self.basis.t()))
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        self.map_bands(coeffs, |b| self.basis.t().dot(&b).dot(&self.basis))
    }

    fn map_bands(&self, x: &[f64], f: impl Fn(ArrayView2<f64>) -> Array2<f64>) -> Vec<f64> {
        let nn = self.n * self.n;
        assert_eq!(x.len() % nn, 0, "vector is not a whole number of bands");
        let mut out = Vec::with_capacity(x.len());
        for band in x.chunks_exact(nn) {
            let view = ArrayView2::from_shape((self.n, self.n), band).expect("band shape");
            out.extend(f(view).iter());
        }
        out
    }
}
