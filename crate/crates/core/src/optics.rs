//! Speckle synthesis from a thin random phase screen.
//!
//! A Gaussian-correlated height map is converted to a wavelength-dependent
//! phase `2π · refractive_delta · h / λ`, the transmitted field is propagated
//! to the detector plane with the angular-spectrum method, and the detected
//! intensity is the speckle pattern. Off-axis point sources are modelled as
//! tilted plane waves; the screen is treated as periodic, so a tilt shifts the
//! whole angular spectrum and the resulting pattern is a translate of the
//! on-axis one (the memory effect).

use std::f64::consts::PI;

use ndarray::{s, Array2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{GiscError, Result};
use crate::fft::{freq_index, Fft2};

pub const DEFAULT_REFRACTIVE_DELTA: f64 = 0.5;

/// Largest source offset, as a fraction of the screen side, for which a
/// translated on-axis pattern is accepted as the off-axis pattern.
pub const MEMORY_EFFECT_FRACTION: f64 = 0.1;

/// Random surface of the phase modulator.
///
/// `grid` holds heights in micrometers with zero sample mean and unit sample
/// variance. Its autocorrelation is `exp(-r² / correlation_length²)`, so the
/// `1/e` half-width equals `correlation_length`.
#[derive(Debug, Clone)]
pub struct PhaseScreen {
    pub grid: Array2<f64>,
    pub pitch_um: f64,
    pub correlation_length_um: f64,
    pub refractive_delta: f64,
    pub seed: u64,
}

impl PhaseScreen {
    pub fn size(&self) -> usize {
        self.grid.nrows()
    }

    pub fn with_refractive_delta(mut self, refractive_delta: f64) -> Result<Self> {
        if !(refractive_delta.is_finite() && refractive_delta > 0.0) {
            return Err(GiscError::InvalidParameter(format!(
                "refractive_delta must be positive, got {refractive_delta}"
            )));
        }
        self.refractive_delta = refractive_delta;
        Ok(self)
    }

    /// Complex transmission `exp(i·2π·Δn·h/λ)` at the given wavelength.
    pub fn transmission(&self, wavelength_nm: f64) -> Result<ComplexField> {
        check_wavelength(wavelength_nm)?;
        let k = 2.0 * PI * self.refractive_delta / (wavelength_nm * 1e-3);
        let data = self.grid.mapv(|h| Complex64::from_polar(1.0, k * h));
        Ok(ComplexField {
            data,
            pitch_um: self.pitch_um,
            wavelength_nm,
        })
    }
}

/// Builds a periodic Gaussian-correlated screen: white noise filtered in the
/// frequency domain by the transform of `exp(-2 r² / ℓ²)`, then mean-removed
/// and rescaled to unit variance.
pub fn make_phase_screen(
    seed: u64,
    size: usize,
    pitch_um: f64,
    correlation_length_um: f64,
) -> Result<PhaseScreen> {
    if size < 16 {
        return Err(GiscError::InvalidParameter(format!(
            "screen size must be at least 16 px, got {size}"
        )));
    }
    if !(pitch_um.is_finite() && pitch_um > 0.0) {
        return Err(GiscError::InvalidParameter(format!(
            "pitch must be positive, got {pitch_um}"
        )));
    }
    if !(correlation_length_um >= pitch_um) {
        return Err(GiscError::InvalidParameter(format!(
            "correlation length {correlation_length_um} um is below the pitch {pitch_um} um"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex64> = (0..size * size)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();

    let plan = Fft2::new(size, size);
    plan.forward(&mut buf);
    let ell_px = correlation_length_um / pitch_um;
    let n = size as f64;
    for r in 0..size {
        let fy = freq_index(r, size) / n;
        for c in 0..size {
            let fx = freq_index(c, size) / n;
            let gain = (-0.5 * PI * PI * ell_px * ell_px * (fx * fx + fy * fy)).exp();
            buf[r * size + c] *= gain;
        }
    }
    plan.inverse(&mut buf);

    let mut grid = Array2::from_shape_fn((size, size), |(r, c)| buf[r * size + c].re);
    // two passes: the second removes the residual left by the first
    for _ in 0..2 {
        let mean = grid.mean().unwrap_or(0.0);
        grid.mapv_inplace(|v| v - mean);
    }
    let var = grid.iter().map(|v| v * v).sum::<f64>() / grid.len() as f64;
    if !(var > 0.0) {
        return Err(GiscError::Numeric("phase screen has zero variance".into()));
    }
    let inv_std = 1.0 / var.sqrt();
    grid.mapv_inplace(|v| v * inv_std);

    Ok(PhaseScreen {
        grid,
        pitch_um,
        correlation_length_um,
        refractive_delta: DEFAULT_REFRACTIVE_DELTA,
        seed,
    })
}

/// Scalar complex field sampled on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub data: Array2<Complex64>,
    pub pitch_um: f64,
    pub wavelength_nm: f64,
}

impl ComplexField {
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.data.mapv(|v| v.norm_sqr())
    }
}

fn check_wavelength(wavelength_nm: f64) -> Result<()> {
    if !(wavelength_nm.is_finite() && wavelength_nm > 0.0) {
        return Err(GiscError::InvalidParameter(format!(
            "wavelength must be positive, got {wavelength_nm} nm"
        )));
    }
    Ok(())
}

/// Free-space propagation by the angular-spectrum method.
///
/// Evanescent components are dropped; every propagating component gets a
/// unit-modulus phase, so energy is conserved whenever the field has no
/// evanescent content. Any grid size is accepted.
pub fn propagate(field: &ComplexField, distance_um: f64) -> Result<ComplexField> {
    propagate_tilted(field, distance_um, (0.0, 0.0))
}

/// Propagates `exp(i 2π (fx0 x + fy0 y)) · field` where `field` is one period
/// of a periodic screen. The carrier is applied as a continuous shift of the
/// angular spectrum, so non-integer tilts introduce no wrap discontinuity.
/// The returned field omits the carrier phase, which does not affect intensity.
fn propagate_tilted(
    field: &ComplexField,
    distance_um: f64,
    tilt_cycles_per_um: (f64, f64),
) -> Result<ComplexField> {
    check_wavelength(field.wavelength_nm)?;
    if !distance_um.is_finite() {
        return Err(GiscError::InvalidParameter(format!(
            "propagation distance must be finite, got {distance_um}"
        )));
    }
    let (rows, cols) = field.data.dim();
    if distance_um == 0.0 && tilt_cycles_per_um == (0.0, 0.0) {
        return Ok(field.clone());
    }

    let plan = Fft2::new(rows, cols);
    let mut buf: Vec<Complex64> = field.data.iter().copied().collect();
    plan.forward(&mut buf);

    let inv_lambda_sq = (1.0 / (field.wavelength_nm * 1e-3)).powi(2);
    let (fx0, fy0) = tilt_cycles_per_um;
    for r in 0..rows {
        let fy = freq_index(r, rows) / (rows as f64 * field.pitch_um) + fy0;
        for c in 0..cols {
            let fx = freq_index(c, cols) / (cols as f64 * field.pitch_um) + fx0;
            let kz_sq = inv_lambda_sq - fx * fx - fy * fy;
            let v = &mut buf[r * cols + c];
            if kz_sq > 0.0 {
                *v *= Complex64::from_polar(1.0, 2.0 * PI * distance_um * kz_sq.sqrt());
            } else {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }
    plan.inverse(&mut buf);

    Ok(ComplexField {
        data: Array2::from_shape_vec((rows, cols), buf).expect("buffer matches grid"),
        pitch_um: field.pitch_um,
        wavelength_nm: field.wavelength_nm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeckleStatistics {
    Rayleigh,
    SuperRayleigh { gamma: f64 },
}

impl SpeckleStatistics {
    pub fn label(&self) -> &'static str {
        match self {
            SpeckleStatistics::Rayleigh => "rayleigh",
            SpeckleStatistics::SuperRayleigh { .. } => "super_rayleigh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecklePattern {
    pub intensity: Array2<f64>,
    pub wavelength_nm: f64,
    pub statistics: SpeckleStatistics,
}

/// Modulator-to-detector geometry used when synthesising speckles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckleGeometry {
    pub distance_um: f64,
    /// Side of the cropped detector window in pixels.
    pub detector_size: usize,
    /// Detector-plane translation, in pixels, per object-plane pixel of offset.
    pub magnification: usize,
}

/// Detector intensity for a monochromatic point source at `source_offset`
/// (object-plane pixels, `(dx, dy)` = (column, row)).
///
/// The pattern for offset `(dx, dy)` is, to within the non-paraxial error of
/// the transfer function, the on-axis pattern translated by
/// `magnification · (dx, dy)` detector pixels.
pub fn speckle_from_point_source(
    screen: &PhaseScreen,
    source_offset: (i64, i64),
    wavelength_nm: f64,
    geometry: &SpeckleGeometry,
) -> Result<SpecklePattern> {
    check_wavelength(wavelength_nm)?;
    let size = screen.size();
    if geometry.detector_size == 0 || geometry.detector_size > size {
        return Err(GiscError::InvalidParameter(format!(
            "detector size {} must be in 1..={size}",
            geometry.detector_size
        )));
    }
    if !(geometry.distance_um > 0.0) {
        return Err(GiscError::InvalidParameter(format!(
            "propagation distance must be positive, got {}",
            geometry.distance_um
        )));
    }

    let (dx, dy) = source_offset;
    let reach = dx.unsigned_abs().max(dy.unsigned_abs()) as f64;
    if reach > MEMORY_EFFECT_FRACTION * size as f64 {
        return Err(GiscError::OutOfMemoryEffect {
            dx,
            dy,
            reason: format!(
                "offsets beyond {:.0}% of the {size}-px screen are not modelled",
                MEMORY_EFFECT_FRACTION * 100.0
            ),
        });
    }
    let shift = reach * geometry.magnification as f64;
    if shift + geometry.detector_size as f64 > size as f64 {
        return Err(GiscError::OutOfMemoryEffect {
            dx,
            dy,
            reason: format!(
                "a {shift}-px shift moves the pattern off the {}-px detector window",
                geometry.detector_size
            ),
        });
    }

    // tilt that translates the pattern by magnification·offset·pitch at the detector
    let lambda_um = wavelength_nm * 1e-3;
    let per_px = geometry.magnification as f64 * screen.pitch_um / (lambda_um * geometry.distance_um);
    let tilt = (dx as f64 * per_px, dy as f64 * per_px);

    let field = screen.transmission(wavelength_nm)?;
    let out = propagate_tilted(&field, geometry.distance_um, tilt)?;
    let d = geometry.detector_size;
    let intensity = out.data.slice(s![..d, ..d]).mapv(|v| v.norm_sqr());

    Ok(SpecklePattern {
        intensity,
        wavelength_nm,
        statistics: SpeckleStatistics::Rayleigh,
    })
}

/// Mean-preserving power-law transform `I -> I^γ`, which raises contrast.
pub fn to_super_rayleigh(pattern: &SpecklePattern, gamma: f64) -> Result<SpecklePattern> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(GiscError::InvalidParameter(format!(
            "gamma must be greater than 1, got {gamma}"
        )));
    }
    if pattern.statistics != SpeckleStatistics::Rayleigh {
        return Err(GiscError::InvalidParameter(
            "super-Rayleigh transform expects a Rayleigh pattern".into(),
        ));
    }
    let intensity = power_law_mean_preserving(&pattern.intensity, gamma)?;
    Ok(SpecklePattern {
        intensity,
        wavelength_nm: pattern.wavelength_nm,
        statistics: SpeckleStatistics::SuperRayleigh { gamma },
    })
}

pub(crate) fn power_law_mean_preserving(intensity: &Array2<f64>, gamma: f64) -> Result<Array2<f64>> {
    let count = intensity.len() as f64;
    let mean_in = intensity.sum() / count;
    let mut out = intensity.mapv(|v| v.max(0.0).powf(gamma));
    let mean_out = out.sum() / count;
    if !(mean_out > 0.0) {
        return Err(GiscError::Numeric(
            "cannot rescale an all-zero pattern to preserve its mean".into(),
        ));
    }
    let k = mean_in / mean_out;
    out.mapv_inplace(|v| v * k);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckleStats {
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    /// `stddev / mean`.
    pub contrast: f64,
    pub sample_count: usize,
}

impl SpeckleStats {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let (mut n, mut sum) = (0usize, 0.0f64);
        let values: Vec<f64> = samples.into_iter().copied().collect();
        for v in &values {
            n += 1;
            sum += v;
        }
        if n == 0 {
            return Err(GiscError::InvalidParameter("empty pattern".into()));
        }
        let mean = sum / n as f64;
        if mean == 0.0 {
            return Err(GiscError::Numeric(
                "division by zero: mean intensity is 0, contrast is undefined".into(),
            ));
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let stddev = var.sqrt();
        Ok(SpeckleStats {
            mean,
            stddev,
            contrast: stddev / mean,
            sample_count: n,
        })
    }
}

pub fn contrast(pattern: &SpecklePattern) -> Result<SpeckleStats> {
    SpeckleStats::from_samples(pattern.intensity.iter())
}
