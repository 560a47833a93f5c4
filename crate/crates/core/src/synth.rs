//! Deterministic synthetic scenes for tests, benchmarks and the desk suite.

use ndarray::{Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GiscError, Result};
use crate::hsi::HsiCube;

/// `bands` wavelengths spread evenly over `[lo, hi]` nm.
pub fn band_centers(lo: f64, hi: f64, bands: usize) -> Result<Vec<f64>> {
    if bands == 0 || (bands > 1 && !(hi > lo)) {
        return Err(GiscError::InvalidParameter(format!(
            "cannot place {bands} bands in [{lo}, {hi}] nm"
        )));
    }
    if bands == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (bands - 1) as f64;
    Ok((0..bands).map(|b| lo + step * b as f64).collect())
}

/// Random voxels set to values in `[0.2, 1]`; `density` is the nonzero
/// fraction (at least one voxel is always lit).
pub fn sparse_cube(n: usize, wavelengths_nm: &[f64], density: f64, seed: u64) -> Result<HsiCube> {
    if !(0.0..=1.0).contains(&density) {
        return Err(GiscError::InvalidParameter(format!("density {density} outside [0, 1]")));
    }
    let bands = wavelengths_nm.len();
    let total = n * n * bands;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = ((density * total as f64).round() as usize).clamp(1, total);
    let mut values = vec![0.0f32; total];
    let picks = rand::seq::index::sample(&mut rng, total, count);
    for i in picks.iter() {
        values[i] = rng.random_range(0.2f32..=1.0);
    }
    HsiCube::new(
        Array3::from_shape_vec((bands, n, n), values).expect("shape matches length"),
        wavelengths_nm.to_vec(),
        format!("sparse_{seed}"),
    )
}

/// A dim background with a linear spectral tilt and a few overlapping
/// rectangles, each carrying a smooth single-peaked spectrum. Values lie in
/// `[0, 1]`.
pub fn block_scene(n: usize, wavelengths_nm: &[f64], seed: u64) -> Result<HsiCube> {
    if n < 4 || wavelengths_nm.is_empty() {
        return Err(GiscError::InvalidParameter(format!(
            "scene needs n >= 4 and at least one band (n={n}, bands={})",
            wavelengths_nm.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands = wavelengths_nm.len();
    let lo = wavelengths_nm[0];
    let hi = wavelengths_nm[bands - 1];
    let span = (hi - lo).max(1.0);
    let mut data = Array3::<f32>::zeros((bands, n, n));
    let level = rng.random_range(0.05..0.2);
    let tilt = rng.random_range(-0.5..0.5);
    for (b, &wl) in wavelengths_nm.iter().enumerate() {
        let v = level * (1.0 + tilt * ((wl - lo) / span - 0.5));
        data.index_axis_mut(Axis(0), b).fill(v as f32);
    }
    let blocks = rng.random_range(2..=4);
    for _ in 0..blocks {
        let h = rng.random_range(n / 4..=n / 2);
        let w = rng.random_range(n / 4..=n / 2);
        let r0 = rng.random_range(0..=n - h);
        let c0 = rng.random_range(0..=n - w);
        let peak = lo + span * rng.random::<f64>();
        let width = span * rng.random_range(0.2..0.6);
        let gain = rng.random_range(0.5..1.0);
        for (b, &wl) in wavelengths_nm.iter().enumerate() {
            let s = (gain * (-((wl - peak) / width).powi(2)).exp()) as f32;
            for r in r0..r0 + h {
                for c in c0..c0 + w {
                    // later blocks occlude earlier ones
                    data[[b, r, c]] = s;
                }
            }
        }
    }
    HsiCube::new(data, wavelengths_nm.to_vec(), format!("blocks_{seed}"))
}
