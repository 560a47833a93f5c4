mod common;

use gisc_core::fft::Fft2;
use gisc_core::optics::{
    contrast, make_phase_screen, speckle_from_point_source, to_super_rayleigh, SpeckleGeometry, SpecklePattern,
};
use ndarray::{s, ArrayView2};
use num_complex::Complex64;

use common::{DISTANCE_UM, MAGNIFICATION};

fn geometry(detector_size: usize) -> SpeckleGeometry {
    SpeckleGeometry {
        distance_um: DISTANCE_UM,
        detector_size,
        magnification: MAGNIFICATION,
    }
}

fn pearson(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let mut num = 0.0;
    let (mut va, mut vb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        num += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    num / (va * vb).sqrt()
}

#[test]
fn screen_autocorrelation_half_width() {
    let screen = make_phase_screen(7, 1024, 1.0, 8.0).unwrap();
    let size = screen.size();
    let mut buf: Vec<Complex64> = screen.grid.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    let plan = Fft2::new(size, size);
    plan.forward(&mut buf);
    buf.iter_mut().for_each(|v| *v = Complex64::new(v.norm_sqr(), 0.0));
    plan.inverse(&mut buf);
    let zero = buf[0].re;
    // average the horizontal and vertical profiles, then interpolate the 1/e crossing
    let profile: Vec<f64> = (0..32).map(|k| 0.5 * (buf[k].re + buf[k * size].re) / zero).collect();
    let target = (-1.0f64).exp();
    let k = profile.iter().position(|v| *v < target).unwrap();
    let width = (k - 1) as f64 + (profile[k - 1] - target) / (profile[k - 1] - profile[k]);
    assert!((width - 8.0).abs() <= 1.6, "1/e half-width {width:.3} px");
}

#[test]
fn rayleigh_histogram_is_exponential() {
    let screen = make_phase_screen(11, 1024, 1.0, 8.0).unwrap();
    let p = speckle_from_point_source(&screen, (0, 0), 620.0, &geometry(1024)).unwrap();
    let mut v: Vec<f64> = p.intensity.iter().copied().collect();
    assert!(v.len() >= 1_000_000);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let ks = v.iter().enumerate().fold(0.0f64, |d, (i, x)| {
        let cdf = 1.0 - (-x / mean).exp();
        d.max((cdf - i as f64 / n).abs()).max(((i + 1) as f64 / n - cdf).abs())
    });
    assert!(ks <= 0.01, "KS statistic {ks:.4}");
}

#[test]
fn super_rayleigh_contrast_grows_with_gamma() {
    let screen = make_phase_screen(3, 256, 1.0, 8.0).unwrap();
    let p = speckle_from_point_source(&screen, (0, 0), 600.0, &geometry(256)).unwrap();
    let base = contrast(&p).unwrap();
    let mut last = base.contrast;
    for gamma in [1.25, 1.5, 2.0, 2.5, 3.0] {
        let sr = to_super_rayleigh(&p, gamma).unwrap();
        let stats = contrast(&sr).unwrap();
        assert!(stats.contrast > last, "gamma {gamma}: {} <= {last}", stats.contrast);
        assert!(((stats.mean - base.mean) / base.mean).abs() <= 1e-9);
        assert!(sr.intensity.iter().all(|v| *v >= 0.0));
        last = stats.contrast;
    }
}

/// Correlation between the offset pattern and the on-axis pattern moved by
/// `magnification · offset`, over the window both patterns cover.
fn shift_correlation(on_axis: &SpecklePattern, shifted: &SpecklePattern, dx: usize, dy: usize) -> f64 {
    let d = on_axis.intensity.nrows();
    let (sx, sy) = (MAGNIFICATION * dx, MAGNIFICATION * dy);
    let a = on_axis.intensity.slice(s![..d - sy, ..d - sx]);
    let b = shifted.intensity.slice(s![sy.., sx..]);
    pearson(a, b)
}

fn worst_shift_correlation(corr_len: f64, offsets: &[(usize, usize)]) -> f64 {
    let screen = make_phase_screen(21, 512, 1.0, corr_len).unwrap();
    let geo = geometry(256);
    let on_axis = speckle_from_point_source(&screen, (0, 0), 620.0, &geo).unwrap();
    offsets
        .iter()
        .map(|&(dx, dy)| {
            let p = speckle_from_point_source(&screen, (dx as i64, dy as i64), 620.0, &geo).unwrap();
            shift_correlation(&on_axis, &p, dx, dy)
        })
        .fold(1.0, f64::min)
}

#[test]
fn memory_effect_near_axis() {
    let r = worst_shift_correlation(8.0, &[(1, 0), (0, 1), (5, 3), (10, 0)]);
    assert!(r >= 0.9, "worst correlation {r:.4}");
}

#[test]
fn memory_effect_over_the_full_range_with_a_smooth_screen() {
    // a smoother surface scatters into a narrower cone, so the translation
    // model holds out to 10% of the screen
    let r = worst_shift_correlation(16.0, &[(1, 0), (20, 0), (0, 35), (51, 51)]);
    assert!(r >= 0.9, "worst correlation {r:.4}");
}

#[test]
fn unshifted_offset_pattern_is_unrelated() {
    let screen = make_phase_screen(21, 512, 1.0, 8.0).unwrap();
    let geo = geometry(256);
    let a = speckle_from_point_source(&screen, (0, 0), 620.0, &geo).unwrap();
    let b = speckle_from_point_source(&screen, (5, 0), 620.0, &geo).unwrap();
    assert!(pearson(a.intensity.view(), b.intensity.view()).abs() < 0.2);
}

#[test]
fn distant_wavelengths_decorrelate() {
    let screen = make_phase_screen(4, 512, 1.0, 8.0).unwrap();
    let geo = geometry(512);
    let a = speckle_from_point_source(&screen, (0, 0), 560.0, &geo).unwrap();
    let b = speckle_from_point_source(&screen, (0, 0), 700.0, &geo).unwrap();
    let r = pearson(a.intensity.view(), b.intensity.view());
    assert!(r < 0.5, "correlation {r:.3}");
    // the spectral correlation width is about 1 nm here
    let c = speckle_from_point_source(&screen, (0, 0), 560.1, &geo).unwrap();
    assert!(pearson(a.intensity.view(), c.intensity.view()) > 0.9);
}

#[test]
fn patterns_are_nonnegative_and_repeatable() {
    let screen = make_phase_screen(9, 128, 1.0, 4.0).unwrap();
    let a = speckle_from_point_source(&screen, (2, -3), 650.0, &geometry(64)).unwrap();
    let b = speckle_from_point_source(&screen, (2, -3), 650.0, &geometry(64)).unwrap();
    assert_eq!(a.intensity, b.intensity);
    assert!(a.intensity.iter().all(|v| v.is_finite() && *v >= 0.0));
}
