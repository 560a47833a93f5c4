//! Pseudo-colour rendering of a cube through a fixed band-to-RGB table.

use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};
use ndarray::Array3;

use crate::error::{GiscError, Result};
use crate::hsi::HsiCube;
use crate::io_util::write_atomic;

/// Bumped whenever the table below changes.
pub const RENDER_TABLE_VERSION: u32 = 1;

/// Primary sensitivities as (centre nm, width nm) Gaussians, ordered R, G, B.
const PRIMARIES: [(f64, f64); 3] = [(610.0, 40.0), (545.0, 40.0), (450.0, 30.0)];

/// Weight of each primary for one wavelength. The three weights sum to 1;
/// wavelengths far outside the visible range fall back to neutral grey.
pub fn rgb_weights(wavelength_nm: f64) -> [f64; 3] {
    let mut w = PRIMARIES.map(|(c, s)| (-0.5 * ((wavelength_nm - c) / s).powi(2)).exp());
    let total: f64 = w.iter().sum();
    if !(total > 1e-12) {
        return [1.0 / 3.0; 3];
    }
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Linear RGB image `(3, h, w)` in `[0, 1]`, scaled so the brightest channel
/// value maps to 1. Gamma is 1.
pub fn pseudocolor(cube: &HsiCube) -> Array3<f64> {
    let (bands, h, w) = cube.data.dim();
    let mut rgb = Array3::<f64>::zeros((3, h, w));
    for b in 0..bands {
        let weights = rgb_weights(cube.wavelengths_nm[b]);
        for r in 0..h {
            for c in 0..w {
                let v = (cube.data[[b, r, c]] as f64).max(0.0);
                for (k, wk) in weights.iter().enumerate() {
                    rgb[[k, r, c]] += wk * v;
                }
            }
        }
    }
    let peak = rgb.iter().fold(0.0f64, |m, v| m.max(*v));
    if peak > 0.0 {
        rgb /= peak;
    }
    rgb
}

pub fn to_rgb8(rgb: &Array3<f64>) -> Vec<u8> {
    let (_, h, w) = rgb.dim();
    let mut out = Vec::with_capacity(3 * h * w);
    for r in 0..h {
        for c in 0..w {
            for k in 0..3 {
                out.push((rgb[[k, r, c]].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    out
}

pub fn encode_png(cube: &HsiCube) -> Result<Vec<u8>> {
    let rgb = pseudocolor(cube);
    let pixels = to_rgb8(&rgb);
    let mut bytes = Vec::new();
    PngEncoder::new(&mut bytes)
        .write_image(&pixels, cube.width() as u32, cube.height() as u32, ExtendedColorType::Rgb8)
        .map_err(|e| GiscError::InvalidParameter(format!("png encoding failed: {e}")))?;
    Ok(bytes)
}

pub fn render_png(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_png(cube)?)
}
