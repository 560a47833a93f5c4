//! The sensing operator `y = Φx + ε`.
//!
//! Each column of `Φ` is the detector pattern produced by one object voxel.
//! Under the memory-effect model the pattern for voxel `(band, row, col)` is
//! the band's on-axis reference pattern translated by
//! `magnification · (row, col)`, seen through an `m x m` detector window. The
//! reference patterns are oversized (`M = m + magnification · n`) so every
//! translate stays inside them.
//!
//! Column ordering is band-major, then row-major:
//! `k = (band · n + row) · n + col`.

use std::sync::Arc;

use ndarray::{Array1, Array2, Array3, ArrayView1};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{GiscError, Result};
use crate::fft::Fft2;
use crate::hsi::HsiCube;
use crate::optics::{
    speckle_from_point_source, to_super_rayleigh, PhaseScreen, SpeckleGeometry, SpecklePattern,
};

/// Refuse to materialise dense operators larger than this many bytes.
pub const DEFAULT_DENSE_CAP_BYTES: u64 = 2 << 30;

/// Above this object side length the automatic mode picks the FFT operator.
pub const DENSE_AUTO_MAX_N: usize = 32;

/// A real linear map with an adjoint, applied to flat vectors.
pub trait LinearOperator: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64>;
}

impl LinearOperator for Array2<f64> {
    fn rows(&self) -> usize {
        self.nrows()
    }

    fn cols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.dot(&ArrayView1::from(x)).to_vec()
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        // row-wise accumulation keeps memory access contiguous
        let mut out = Array1::<f64>::zeros(self.ncols());
        for (row, &w) in self.outer_iter().zip(y) {
            if w != 0.0 {
                out.scaled_add(w, &row);
            }
        }
        out.to_vec()
    }
}

/// Where the detector sits relative to the modulator and how object pixels
/// map to detector shifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGeometry {
    pub distance_um: f64,
    pub magnification: usize,
    /// Detector side length in pixels.
    pub m: usize,
}

/// Per-wavelength on-axis reference speckles that generate `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub reference_patterns: Vec<SpecklePattern>,
    pub wavelengths_nm: Vec<f64>,
    pub magnification: usize,
    /// Object-plane side length.
    pub n: usize,
    /// Detector side length.
    pub m: usize,
    /// Hash of everything that determines the patterns.
    pub fingerprint: u64,
}

impl CalibrationSet {
    pub fn from_parts(
        reference_patterns: Vec<SpecklePattern>,
        wavelengths_nm: Vec<f64>,
        magnification: usize,
        n: usize,
        m: usize,
        fingerprint: u64,
    ) -> Result<Self> {
        if reference_patterns.is_empty() || reference_patterns.len() != wavelengths_nm.len() {
            return Err(GiscError::Shape(format!(
                "{} reference patterns for {} wavelengths",
                reference_patterns.len(),
                wavelengths_nm.len()
            )));
        }
        if magnification == 0 || n == 0 || m == 0 {
            return Err(GiscError::InvalidParameter(
                "magnification, n and m must be positive".into(),
            ));
        }
        let side = m + magnification * n;
        for p in &reference_patterns {
            let (r, c) = p.intensity.dim();
            if r != c || r < side {
                return Err(GiscError::Shape(format!(
                    "reference pattern is {r}x{c}, needs a square of at least {side}"
                )));
            }
            if r != reference_patterns[0].intensity.nrows() {
                return Err(GiscError::Shape("reference patterns differ in size".into()));
            }
            if p.intensity.iter().any(|v| !(*v >= 0.0)) {
                return Err(GiscError::InvalidParameter(
                    "reference patterns must be nonnegative".into(),
                ));
            }
        }
        Ok(Self {
            reference_patterns,
            wavelengths_nm,
            magnification,
            n,
            m,
            fingerprint,
        })
    }

    pub fn bands(&self) -> usize {
        self.wavelengths_nm.len()
    }

    /// Side length of the stored reference patterns.
    pub fn pattern_side(&self) -> usize {
        self.reference_patterns[0].intensity.nrows()
    }

    /// Offset of the detector window inside a reference pattern.
    fn window_origin(&self) -> usize {
        self.magnification * (self.n - 1)
    }

    pub fn unknowns(&self) -> usize {
        self.n * self.n * self.bands()
    }

    pub fn measurements(&self) -> usize {
        self.m * self.m
    }

    /// Detector image for the single voxel `(band, row, col)` at unit
    /// intensity, read straight from the reference pattern.
    pub fn column_pattern(&self, band: usize, row: usize, col: usize) -> Array2<f64> {
        let o = self.window_origin();
        let (dr, dc) = (o - self.magnification * row, o - self.magnification * col);
        let p = &self.reference_patterns[band].intensity;
        Array2::from_shape_fn((self.m, self.m), |(u, v)| p[[u + dr, v + dc]])
    }

    pub fn voxel_index(&self, band: usize, row: usize, col: usize) -> usize {
        (band * self.n + row) * self.n + col
    }
}

/// 64-bit truncated SHA-256 of a canonical text rendering.
pub fn fingerprint64(parts: &[String]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn calibration_fingerprint(
    screen: &PhaseScreen,
    geometry: &CalibrationGeometry,
    wavelengths_nm: &[f64],
    n: usize,
    super_rayleigh: Option<f64>,
) -> u64 {
    fingerprint64(&[
        format!("seed={}", screen.seed),
        format!("screen={}", screen.size()),
        format!("pitch={:?}", screen.pitch_um),
        format!("corr={:?}", screen.correlation_length_um),
        format!("delta={:?}", screen.refractive_delta),
        format!("distance={:?}", geometry.distance_um),
        format!("magnification={}", geometry.magnification),
        format!("m={}", geometry.m),
        format!("n={n}"),
        format!("wavelengths={wavelengths_nm:?}"),
        format!("gamma={super_rayleigh:?}"),
    ])
}

/// Scans a point source over the band list, recording one oversized on-axis
/// pattern per wavelength (optionally pushed to super-Rayleigh statistics).
pub fn calibrate(
    screen: &PhaseScreen,
    geometry: &CalibrationGeometry,
    wavelengths_nm: &[f64],
    n: usize,
    super_rayleigh: Option<f64>,
) -> Result<CalibrationSet> {
    if wavelengths_nm.is_empty() {
        return Err(GiscError::InvalidParameter("no calibration wavelengths".into()));
    }
    if wavelengths_nm.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GiscError::InvalidParameter(
            "calibration wavelengths must be strictly increasing".into(),
        ));
    }
    if n < 4 {
        return Err(GiscError::InvalidParameter(format!("n must be at least 4, got {n}")));
    }
    if geometry.magnification == 0 || geometry.m == 0 {
        return Err(GiscError::InvalidParameter(
            "magnification and m must be positive".into(),
        ));
    }
    let side = geometry.m + geometry.magnification * n;
    if side > screen.size() {
        return Err(GiscError::Config(format!(
            "a {}-px screen cannot cover the {side}-px reference area (m={} + magnification {} x n={}); enlarge the screen",
            screen.size(),
            geometry.m,
            geometry.magnification,
            n
        )));
    }
    let speckle_geometry = SpeckleGeometry {
        distance_um: geometry.distance_um,
        detector_size: side,
        magnification: geometry.magnification,
    };
    let patterns = wavelengths_nm
        .par_iter()
        .map(|&wl| {
            let p = speckle_from_point_source(screen, (0, 0), wl, &speckle_geometry)?;
            match super_rayleigh {
                Some(gamma) => to_super_rayleigh(&p, gamma),
                None => Ok(p),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    CalibrationSet::from_parts(
        patterns,
        wavelengths_nm.to_vec(),
        geometry.magnification,
        n,
        geometry.m,
        calibration_fingerprint(screen, geometry, wavelengths_nm, n, super_rayleigh),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorMode {
    Dense,
    Convolutional,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnNorm {
    #[default]
    None,
    UnitL2,
}

/// `m·m` measurements over `n·n·B` unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingRate {
    pub measurements: u64,
    pub unknowns: u64,
}

impl SamplingRate {
    pub fn new(n: usize, m: usize, bands: usize) -> Self {
        Self {
            measurements: (m * m) as u64,
            unknowns: (n * n * bands) as u64,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.measurements as f64 / self.unknowns as f64
    }

    /// The rate as a reduced fraction.
    pub fn reduced(&self) -> (u64, u64) {
        let g = gcd(self.measurements, self.unknowns).max(1);
        (self.measurements / g, self.unknowns / g)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Precomputed spectra of the reference patterns on an `M x M` periodic grid.
#[derive(Debug)]
struct ConvKernels {
    plan: Fft2,
    spectra: Vec<Vec<Complex64>>,
}

/// The linear map `Φ` and its transpose, in dense or FFT form.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    mode: OperatorMode,
    calib: Arc<CalibrationSet>,
    column_norm: ColumnNorm,
    dense: Option<Arc<Array2<f64>>>,
    kernels: Option<Arc<ConvKernels>>,
    /// `1 / ‖column‖` when columns are normalised. The dense matrix already
    /// has them folded in.
    inv_norms: Option<Arc<Vec<f64>>>,
}

impl SensingOperator {
    /// FFT-based operator; never materialises `Φ`.
    pub fn convolutional(calib: CalibrationSet, column_norm: ColumnNorm) -> Result<Self> {
        let calib = Arc::new(calib);
        let side = calib.pattern_side();
        let plan = Fft2::new(side, side);
        let spectra = calib
            .reference_patterns
            .par_iter()
            .map(|p| {
                let mut buf: Vec<Complex64> =
                    p.intensity.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                plan.forward(&mut buf);
                buf
            })
            .collect();
        let inv_norms = match column_norm {
            ColumnNorm::None => None,
            ColumnNorm::UnitL2 => Some(Arc::new(inverse_column_norms(&calib)?)),
        };
        Ok(Self {
            mode: OperatorMode::Convolutional,
            calib,
            column_norm,
            dense: None,
            kernels: Some(Arc::new(ConvKernels { plan, spectra })),
            inv_norms,
        })
    }

    /// Dense for small problems that fit the default cap, FFT otherwise.
    pub fn auto(calib: CalibrationSet, column_norm: ColumnNorm) -> Result<Self> {
        if calib.n <= DENSE_AUTO_MAX_N && dense_bytes(&calib) <= DEFAULT_DENSE_CAP_BYTES {
            build_dense_matrix(calib, column_norm, DEFAULT_DENSE_CAP_BYTES)
        } else {
            Self::convolutional(calib, column_norm)
        }
    }

    pub fn mode(&self) -> OperatorMode {
        self.mode
    }

    pub fn column_norm(&self) -> ColumnNorm {
        self.column_norm
    }

    pub fn calibration(&self) -> &CalibrationSet {
        &self.calib
    }

    pub fn dense_matrix(&self) -> Option<&Array2<f64>> {
        self.dense.as_deref()
    }

    /// Calibration fingerprint combined with the column normalisation.
    pub fn fingerprint(&self) -> u64 {
        fingerprint64(&[
            format!("calibration={:016x}", self.calib.fingerprint),
            format!("norm={:?}", self.column_norm),
        ])
    }

    pub fn n(&self) -> usize {
        self.calib.n
    }

    pub fn m(&self) -> usize {
        self.calib.m
    }

    pub fn bands(&self) -> usize {
        self.calib.bands()
    }

    pub fn sampling_rate(&self) -> SamplingRate {
        SamplingRate::new(self.n(), self.m(), self.bands())
    }

    /// Row sums `R_j = Σ_k Φ_jk`, i.e. `Φ · 1`.
    pub fn row_sums(&self) -> Vec<f64> {
        self.apply(&vec![1.0; self.cols()])
    }

    /// Noiseless or noisy measurement of `x`.
    pub fn forward(&self, x: &HsiCube, noise: NoiseSpec, seed: u64) -> Result<Measurement> {
        self.check_cube(x)?;
        let clean = self.apply(&x.to_vec_f64());
        let values = noise.apply(clean, seed)?;
        let m = self.m();
        Ok(Measurement {
            image: Array2::from_shape_vec((m, m), values).expect("m*m values"),
            noise,
            seed,
            operator_fingerprint: self.fingerprint(),
        })
    }

    /// `Φᵀ y` shaped as a cube with the calibration wavelengths.
    pub fn adjoint(&self, y: &Measurement) -> Result<HsiCube> {
        let m = self.m();
        if y.image.dim() != (m, m) {
            return Err(GiscError::Shape(format!(
                "measurement is {:?}, operator expects {m}x{m}",
                y.image.dim()
            )));
        }
        let flat: Vec<f64> = y.image.iter().copied().collect();
        let out = self.apply_adjoint(&flat);
        self.vector_to_cube(&out, "adjoint")
    }

    pub fn vector_to_cube(&self, values: &[f64], name: &str) -> Result<HsiCube> {
        HsiCube::from_flat(
            values.iter().map(|&v| v as f32).collect(),
            (self.n(), self.n()),
            self.calib.wavelengths_nm.clone(),
            name,
        )
    }

    fn check_cube(&self, x: &HsiCube) -> Result<()> {
        let n = self.n();
        if (x.bands(), x.height(), x.width()) != (self.bands(), n, n) {
            return Err(GiscError::Shape(format!(
                "cube is {}x{}x{}, operator expects {n}x{n}x{}",
                x.height(),
                x.width(),
                x.bands(),
                self.bands()
            )));
        }
        Ok(())
    }

    fn conv_forward(&self, kernels: &ConvKernels, x: &[f64]) -> Vec<f64> {
        let c = &*self.calib;
        let (n, m, mag, side) = (c.n, c.m, c.magnification, c.pattern_side());
        let o = c.window_origin();
        let per_band: Vec<Vec<Complex64>> = (0..c.bands())
            .into_par_iter()
            .map(|b| {
                let mut z = vec![Complex64::new(0.0, 0.0); side * side];
                let band = &x[b * n * n..(b + 1) * n * n];
                let mut any = false;
                for r in 0..n {
                    for col in 0..n {
                        let v = band[r * n + col];
                        if v != 0.0 {
                            any = true;
                            z[(mag * r) * side + mag * col] = Complex64::new(v, 0.0);
                        }
                    }
                }
                if !any {
                    return Vec::new();
                }
                kernels.plan.forward(&mut z);
                for (zi, pi) in z.iter_mut().zip(&kernels.spectra[b]) {
                    *zi *= pi;
                }
                z
            })
            .collect();
        // fixed-order reduction keeps results bit-reproducible
        let mut acc = vec![Complex64::new(0.0, 0.0); side * side];
        for spec in per_band.iter().filter(|s| !s.is_empty()) {
            for (a, s) in acc.iter_mut().zip(spec) {
                *a += s;
            }
        }
        kernels.plan.inverse(&mut acc);
        let mut y = Vec::with_capacity(m * m);
        for u in 0..m {
            for v in 0..m {
                y.push(acc[(u + o) * side + v + o].re);
            }
        }
        y
    }

    fn conv_adjoint(&self, kernels: &ConvKernels, y: &[f64]) -> Vec<f64> {
        let c = &*self.calib;
        let (n, m, mag, side) = (c.n, c.m, c.magnification, c.pattern_side());
        let o = c.window_origin();
        let mut w = vec![Complex64::new(0.0, 0.0); side * side];
        for u in 0..m {
            for v in 0..m {
                w[(u + o) * side + v + o] = Complex64::new(y[u * m + v], 0.0);
            }
        }
        kernels.plan.forward(&mut w);
        let bands: Vec<Vec<f64>> = (0..c.bands())
            .into_par_iter()
            .map(|b| {
                let mut g: Vec<Complex64> = w
                    .iter()
                    .zip(&kernels.spectra[b])
                    .map(|(wi, pi)| wi * pi.conj())
                    .collect();
                kernels.plan.inverse(&mut g);
                let mut out = Vec::with_capacity(n * n);
                for r in 0..n {
                    for col in 0..n {
                        out.push(g[(mag * r) * side + mag * col].re);
                    }
                }
                out
            })
            .collect();
        bands.concat()
    }
}

impl LinearOperator for SensingOperator {
    fn rows(&self) -> usize {
        self.calib.measurements()
    }

    fn cols(&self) -> usize {
        self.calib.unknowns()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols(), "object vector length");
        if let Some(dense) = &self.dense {
            return dense.apply(x);
        }
        let kernels = self.kernels.as_ref().expect("convolutional kernels");
        match &self.inv_norms {
            Some(inv) => {
                let scaled: Vec<f64> = x.iter().zip(inv.iter()).map(|(a, s)| a * s).collect();
                self.conv_forward(kernels, &scaled)
            }
            None => self.conv_forward(kernels, x),
        }
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows(), "measurement vector length");
        if let Some(dense) = &self.dense {
            return dense.apply_adjoint(y);
        }
        let kernels = self.kernels.as_ref().expect("convolutional kernels");
        let mut out = self.conv_adjoint(kernels, y);
        if let Some(inv) = &self.inv_norms {
            for (o, s) in out.iter_mut().zip(inv.iter()) {
                *o *= s;
            }
        }
        out
    }
}

fn dense_bytes(calib: &CalibrationSet) -> u64 {
    calib.measurements() as u64 * calib.unknowns() as u64 * std::mem::size_of::<f64>() as u64
}

/// Column norms from a summed-area table of squared intensities.
fn inverse_column_norms(calib: &CalibrationSet) -> Result<Vec<f64>> {
    let (n, m, mag) = (calib.n, calib.m, calib.magnification);
    let o = calib.window_origin();
    let mut out = Vec::with_capacity(calib.unknowns());
    for (b, p) in calib.reference_patterns.iter().enumerate() {
        let side = p.intensity.nrows();
        let mut sat = vec![0.0f64; (side + 1) * (side + 1)];
        for r in 0..side {
            let mut row_sum = 0.0;
            for c in 0..side {
                let v = p.intensity[[r, c]];
                row_sum += v * v;
                sat[(r + 1) * (side + 1) + c + 1] = sat[r * (side + 1) + c + 1] + row_sum;
            }
        }
        let rect = |r0: usize, c0: usize| {
            let (r1, c1) = (r0 + m, c0 + m);
            sat[r1 * (side + 1) + c1] - sat[r0 * (side + 1) + c1] - sat[r1 * (side + 1) + c0]
                + sat[r0 * (side + 1) + c0]
        };
        for r in 0..n {
            for c in 0..n {
                let energy = rect(o - mag * r, o - mag * c);
                if !(energy > 0.0) {
                    return Err(GiscError::Numeric(format!(
                        "column for voxel (band {b}, row {r}, col {c}) has zero energy"
                    )));
                }
                out.push(1.0 / energy.sqrt());
            }
        }
    }
    Ok(out)
}

/// Materialises `Φ` (`m·m x n·n·B`), refusing anything above `cap_bytes`.
pub fn build_dense_matrix(
    calib: CalibrationSet,
    column_norm: ColumnNorm,
    cap_bytes: u64,
) -> Result<SensingOperator> {
    let bytes = dense_bytes(&calib);
    if bytes > cap_bytes {
        return Err(GiscError::Capacity(format!(
            "dense operator needs {bytes} bytes ({} x {}), above the {cap_bytes}-byte cap; use the convolutional mode",
            calib.measurements(),
            calib.unknowns()
        )));
    }
    let (n, rows) = (calib.n, calib.measurements());
    let mut phi = Array2::<f64>::zeros((rows, calib.unknowns()));
    let mut inv_norms = Vec::new();
    for b in 0..calib.bands() {
        for r in 0..n {
            for c in 0..n {
                let k = calib.voxel_index(b, r, c);
                let col = calib.column_pattern(b, r, c);
                let scale = match column_norm {
                    ColumnNorm::None => 1.0,
                    ColumnNorm::UnitL2 => {
                        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if !(norm > 0.0) {
                            return Err(GiscError::Numeric(format!("column {k} has zero energy")));
                        }
                        inv_norms.push(1.0 / norm);
                        1.0 / norm
                    }
                };
                for (j, v) in col.iter().enumerate() {
                    phi[[j, k]] = v * scale;
                }
            }
        }
    }
    Ok(SensingOperator {
        mode: OperatorMode::Dense,
        calib: Arc::new(calib),
        column_norm,
        dense: Some(Arc::new(phi)),
        kernels: None,
        inv_norms: (column_norm == ColumnNorm::UnitL2).then(|| Arc::new(inv_norms)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    AdditiveGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// `10·log10(‖Φx‖² / ‖ε‖²)`.
    pub target_snr_db: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        kind: NoiseKind::None,
        target_snr_db: f64::INFINITY,
    };

    pub fn gaussian(target_snr_db: f64) -> Self {
        Self {
            kind: NoiseKind::AdditiveGaussian,
            target_snr_db,
        }
    }

    /// Adds white Gaussian noise rescaled so the realised SNR equals the
    /// target exactly.
    pub fn apply(&self, mut clean: Vec<f64>, seed: u64) -> Result<Vec<f64>> {
        match self.kind {
            NoiseKind::None => Ok(clean),
            NoiseKind::AdditiveGaussian => {
                if !self.target_snr_db.is_finite() {
                    return Err(GiscError::InvalidParameter(format!(
                        "target SNR must be finite, got {}",
                        self.target_snr_db
                    )));
                }
                let signal: f64 = clean.iter().map(|v| v * v).sum();
                if signal == 0.0 {
                    return Ok(clean);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let eps: Vec<f64> = (0..clean.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                let drawn: f64 = eps.iter().map(|v| v * v).sum();
                let wanted = signal / 10f64.powf(self.target_snr_db / 10.0);
                let k = (wanted / drawn).sqrt();
                for (y, e) in clean.iter_mut().zip(&eps) {
                    *y += k * e;
                }
                Ok(clean)
            }
        }
    }
}

/// Detector image `Y` plus the provenance needed to pair it with an operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub image: Array2<f64>,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub operator_fingerprint: u64,
}

impl Measurement {
    pub fn as_vec(&self) -> Vec<f64> {
        self.image.iter().copied().collect()
    }
}

/// Splits an `m x m` image into its four quadrants, stacked as channels in the
/// order top-left, top-right, bottom-left, bottom-right. The result is shaped
/// `(4, m/2, m/2)`.
pub fn reshape_measurement<T: Copy>(image: &Array2<T>) -> Result<Array3<T>> {
    let (rows, cols) = image.dim();
    if rows != cols || rows % 2 != 0 {
        return Err(GiscError::Shape(format!(
            "quadrant reshape needs an even square image, got {rows}x{cols}"
        )));
    }
    let h = rows / 2;
    Ok(Array3::from_shape_fn((4, h, h), |(q, r, c)| {
        image[[r + h * (q / 2), c + h * (q % 2)]]
    }))
}

/// Inverse of [`reshape_measurement`].
pub fn assemble_measurement<T: Copy>(patches: &Array3<T>) -> Result<Array2<T>> {
    let (q, h, w) = patches.dim();
    if q != 4 || h != w {
        return Err(GiscError::Shape(format!(
            "expected 4 square patches, got {q}x{h}x{w}"
        )));
    }
    Ok(Array2::from_shape_fn((2 * h, 2 * h), |(r, c)| {
        patches[[2 * (r / h) + c / h, r % h, c % h]]
    }))
}
