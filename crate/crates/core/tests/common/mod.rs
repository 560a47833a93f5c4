#![allow(dead_code)]

use gisc_core::hsi::HsiCube;
use gisc_core::optics::{make_phase_screen, PhaseScreen};
use gisc_core::sensing::{calibrate, CalibrationGeometry, CalibrationSet, ColumnNorm, SensingOperator};
use gisc_core::synth::band_centers;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DISTANCE_UM: f64 = 5000.0;
pub const MAGNIFICATION: usize = 2;

pub fn screen(seed: u64) -> PhaseScreen {
    make_phase_screen(seed, 512, 1.0, 8.0).unwrap()
}

pub fn wavelengths(bands: usize) -> Vec<f64> {
    band_centers(560.0, 700.0, bands).unwrap()
}

pub fn calibration(seed: u64, n: usize, m: usize, bands: usize, gamma: Option<f64>) -> CalibrationSet {
    let geometry = CalibrationGeometry {
        distance_um: DISTANCE_UM,
        magnification: MAGNIFICATION,
        m,
    };
    calibrate(&screen(seed), &geometry, &wavelengths(bands), n, gamma).unwrap()
}

pub fn dense_and_conv(calib: CalibrationSet, norm: ColumnNorm) -> (SensingOperator, SensingOperator) {
    let dense = gisc_core::sensing::build_dense_matrix(calib.clone(), norm, u64::MAX).unwrap();
    let conv = SensingOperator::convolutional(calib, norm).unwrap();
    (dense, conv)
}

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random::<f64>() - 0.5).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn rel_err(a: &[f64], reference: &[f64]) -> f64 {
    let num = a.iter().zip(reference).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den = reference.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Mean squared error over every voxel, written as a plain loop.
pub fn psnr_oracle(x: &HsiCube, y: &HsiCube) -> f64 {
    let (b, h, w) = x.data.dim();
    let mut sum = 0.0;
    for i in 0..b {
        for j in 0..h {
            for k in 0..w {
                let d = x.data[[i, j, k]] as f64 - y.data[[i, j, k]] as f64;
                sum += d * d;
            }
        }
    }
    let mse = sum / (b * h * w) as f64;
    if mse == 0.0 {
        100.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(100.0)
    }
}

/// Mean spectral angle with an explicit per-pixel loop.
pub fn sam_oracle(x: &HsiCube, y: &HsiCube) -> f64 {
    let (b, h, w) = x.data.dim();
    let mut angles = Vec::new();
    for j in 0..h {
        for k in 0..w {
            let a: Vec<f64> = (0..b).map(|i| x.data[[i, j, k]] as f64).collect();
            let c: Vec<f64> = (0..b).map(|i| y.data[[i, j, k]] as f64).collect();
            let na = dot(&a, &a).sqrt();
            let nc = dot(&c, &c).sqrt();
            if na > 1e-12 && nc > 1e-12 {
                let cos = (dot(&a, &c) / (na * nc)).clamp(-1.0, 1.0);
                angles.push(cos.acos());
            }
        }
    }
    if angles.is_empty() {
        0.0
    } else {
        angles.iter().sum::<f64>() / angles.len() as f64
    }
}

pub fn random_cube(bands: usize, h: usize, w: usize, seed: u64) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f32> = (0..bands * h * w).map(|_| rng.random::<f32>()).collect();
    HsiCube::from_flat(values, (h, w), wavelengths(bands), "random").unwrap()
}
