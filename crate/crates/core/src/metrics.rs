//! Full-reference quality metrics for hyperspectral cubes with peak 1.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{GiscError, Result};
use crate::hsi::HsiCube;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const PEAK: f64 = 1.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
/// Spectra with a norm at or below this are left out of the SAM average.
pub const SAM_MIN_NORM: f64 = 1e-12;

pub const CSV_HEADER: &str = "name,algorithm,speckle_kind,psnr_db,ssim,sam_rad";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub sam_rad: f64,
}

fn check_shapes(x: &HsiCube, y: &HsiCube) -> Result<()> {
    if x.data.dim() != y.data.dim() {
        return Err(GiscError::Shape(format!(
            "cannot compare cubes of shape {:?} and {:?}",
            x.data.dim(),
            y.data.dim()
        )));
    }
    Ok(())
}

/// `10 log10(peak² / MSE)` with the MSE taken over the whole volume.
pub fn psnr(x: &HsiCube, y: &HsiCube) -> Result<f64> {
    check_shapes(x, y)?;
    let count = x.data.len() as f64;
    let mse = x
        .data
        .iter()
        .zip(y.data.iter())
        .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
        .sum::<f64>()
        / count;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (PEAK * PEAK / mse).log10()).min(PSNR_CAP_DB)
}

fn gaussian_window() -> Array2<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = Array2::from_shape_fn((SSIM_WINDOW, SSIM_WINDOW), |(i, j)| {
        let (di, dj) = (i as f64 - half, j as f64 - half);
        (-(di * di + dj * dj) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let total = w.sum();
    w /= total;
    w
}

/// Mean SSIM of one band over all fully contained windows.
pub fn ssim_band(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    let (h, w) = x.dim();
    if y.dim() != (h, w) {
        return Err(GiscError::Shape(format!("band shapes {:?} and {:?} differ", x.dim(), y.dim())));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(GiscError::Shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for r in 0..oh {
        for c in 0..ow {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..SSIM_WINDOW {
                for j in 0..SSIM_WINDOW {
                    let g = win[[i, j]];
                    let a = x[[r + i, c + j]];
                    let b = y[[r + i, c + j]];
                    mx += g * a;
                    my += g * b;
                    sxx += g * a * a;
                    syy += g * b * b;
                    sxy += g * a * b;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / (oh * ow) as f64)
}

/// Band-averaged SSIM.
pub fn ssim(x: &HsiCube, y: &HsiCube) -> Result<f64> {
    check_shapes(x, y)?;
    let mut total = 0.0;
    for b in 0..x.bands() {
        let xb = x.data.index_axis(Axis(0), b).mapv(f64::from);
        let yb = y.data.index_axis(Axis(0), b).mapv(f64::from);
        total += ssim_band(xb.view(), yb.view())?;
    }
    Ok(total / x.bands() as f64)
}

/// Mean spectral angle over pixels where both spectra are nonzero. Returns 0
/// when no such pixel exists.
pub fn sam(x: &HsiCube, y: &HsiCube) -> Result<f64> {
    check_shapes(x, y)?;
    if x.bands() < 2 {
        return Err(GiscError::Shape("SAM needs at least two bands".into()));
    }
    let (bands, h, w) = x.data.dim();
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..h {
        for c in 0..w {
            let (mut nx, mut ny) = (0.0, 0.0);
            for b in 0..bands {
                nx += (x.data[[b, r, c]] as f64).powi(2);
                ny += (y.data[[b, r, c]] as f64).powi(2);
            }
            let (nx, ny) = (nx.sqrt(), ny.sqrt());
            if nx > SAM_MIN_NORM && ny > SAM_MIN_NORM {
                // half-angle form: exact at 0 where acos loses precision
                let (mut diff, mut sum) = (0.0, 0.0);
                for b in 0..bands {
                    let u = x.data[[b, r, c]] as f64 / nx;
                    let v = y.data[[b, r, c]] as f64 / ny;
                    diff += (u - v).powi(2);
                    sum += (u + v).powi(2);
                }
                total += 2.0 * diff.sqrt().atan2(sum.sqrt());
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

pub fn evaluate(x: &HsiCube, y: &HsiCube) -> Result<MetricsReport> {
    Ok(MetricsReport {
        psnr_db: psnr(x, y)?,
        ssim: ssim(x, y)?,
        sam_rad: sam(x, y)?,
    })
}

/// One scored reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub name: String,
    pub algorithm: String,
    pub speckle_kind: String,
    pub report: MetricsReport,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6}",
            self.name,
            self.algorithm,
            self.speckle_kind,
            self.report.psnr_db,
            self.report.ssim,
            self.report.sam_rad
        )
    }
}

/// Arithmetic mean of each metric, summed in row order.
pub fn mean_report(rows: &[MetricsRow]) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(GiscError::InvalidParameter("no rows to aggregate".into()));
    }
    let k = rows.len() as f64;
    let (p, s, a) = rows.iter().fold((0.0, 0.0, 0.0), |(p, s, a), r| {
        (p + r.report.psnr_db, s + r.report.ssim, a + r.report.sam_rad)
    });
    Ok(MetricsReport {
        psnr_db: p / k,
        ssim: s / k,
        sam_rad: a / k,
    })
}

/// Scores `(name, algorithm, speckle_kind, truth, estimate)` items and
/// returns the per-item rows with their mean.
pub fn evaluate_set(
    items: &[(String, String, String, &HsiCube, &HsiCube)],
) -> Result<(Vec<MetricsRow>, MetricsReport)> {
    let rows = items
        .iter()
        .map(|(name, alg, kind, x, y)| {
            Ok(MetricsRow {
                name: name.clone(),
                algorithm: alg.clone(),
                speckle_kind: kind.clone(),
                report: evaluate(x, y)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = mean_report(&rows)?;
    Ok((rows, mean))
}

/// Per-row CSV followed by a `MEAN` row.
pub fn to_csv(rows: &[MetricsRow]) -> Result<String> {
    let mean = mean_report(rows)?;
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    let (alg, kind) = common_labels(rows);
    out.push_str(
        &MetricsRow {
            name: "MEAN".into(),
            algorithm: alg,
            speckle_kind: kind,
            report: mean,
        }
        .csv_line(),
    );
    out.push('\n');
    Ok(out)
}

fn common_labels(rows: &[MetricsRow]) -> (String, String) {
    let pick = |f: fn(&MetricsRow) -> &str| {
        let first = f(&rows[0]);
        if rows.iter().all(|r| f(r) == first) {
            first.to_string()
        } else {
            "*".to_string()
        }
    };
    (pick(|r| &r.algorithm), pick(|r| &r.speckle_kind))
}

/// Parses rows written by [`to_csv`], skipping the header and `MEAN` rows.
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(GiscError::format(0, format!("unexpected metrics header {other:?}")));
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(GiscError::format(i + 1, format!("expected 6 fields, found {}", f.len())));
        }
        if f[0] == "MEAN" {
            continue;
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| GiscError::format(i + 1, format!("bad number {s:?}: {e}")))
        };
        rows.push(MetricsRow {
            name: f[0].into(),
            algorithm: f[1].into(),
            speckle_kind: f[2].into(),
            report: MetricsReport {
                psnr_db: num(f[3])?,
                ssim: num(f[4])?,
                sam_rad: num(f[5])?,
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn cube(data: Array3<f32>) -> HsiCube {
        let bands = data.dim().0;
        HsiCube::new(data, (0..bands).map(|b| 500.0 + b as f64).collect(), "t").unwrap()
    }

    #[test]
    fn psnr_closed_form() {
        let x = cube(Array3::zeros((2, 4, 4)));
        let y = cube(Array3::from_elem((2, 4, 4), 0.5));
        assert!((psnr(&x, &y).unwrap() - 6.020599913279624).abs() < 1e-9);
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn ssim_identity_and_constants() {
        let x = cube(Array3::from_shape_fn((2, 12, 13), |(b, r, c)| ((b + r * c) % 7) as f32 / 7.0));
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        let inv = cube(x.data.mapv(|v| 1.0 - v));
        assert!(ssim(&x, &inv).unwrap() < 1.0);
        let k = cube(Array3::from_elem((1, 11, 11), 0.3));
        assert!((ssim(&k, &k).unwrap() - 1.0).abs() < 1e-12);
        let small = cube(Array3::zeros((1, 10, 20)));
        assert!(ssim(&small, &small).is_err());
    }

    #[test]
    fn sam_cases() {
        let x = cube(Array3::from_shape_fn((3, 2, 2), |(b, r, c)| (1 + b + r + c) as f32));
        let twice = cube(x.data.mapv(|v| 2.0 * v));
        assert!(sam(&x, &twice).unwrap().abs() < 1e-7);
        let e1 = cube(Array3::from_shape_fn((2, 2, 2), |(b, _, _)| if b == 0 { 1.0 } else { 0.0 }));
        let e2 = cube(Array3::from_shape_fn((2, 2, 2), |(b, _, _)| if b == 1 { 1.0 } else { 0.0 }));
        assert!((sam(&e1, &e2).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let one_band = cube(Array3::zeros((1, 2, 2)));
        assert!(sam(&one_band, &one_band).is_err());
    }

    #[test]
    fn zero_spectra_are_skipped() {
        let x = cube(Array3::zeros((2, 2, 2)));
        assert_eq!(sam(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn mean_of_two() {
        let row = |p| MetricsRow {
            name: "a".into(),
            algorithm: "gi".into(),
            speckle_kind: "rayleigh".into(),
            report: MetricsReport { psnr_db: p, ssim: 0.5, sam_rad: 0.1 },
        };
        let m = mean_report(&[row(20.0), row(30.0)]).unwrap();
        assert_eq!(m.psnr_db, 25.0);
        assert!(mean_report(&[]).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let rows = vec![
            MetricsRow {
                name: "s0".into(),
                algorithm: "dgi".into(),
                speckle_kind: "rayleigh".into(),
                report: MetricsReport { psnr_db: 21.5, ssim: 0.75, sam_rad: 0.25 },
            },
            MetricsRow {
                name: "s1".into(),
                algorithm: "dgi".into(),
                speckle_kind: "rayleigh".into(),
                report: MetricsReport { psnr_db: 22.5, ssim: 0.5, sam_rad: 0.125 },
            },
        ];
        let text = to_csv(&rows).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert!(text.lines().last().unwrap().starts_with("MEAN,dgi,rayleigh,22.000000"));
        assert_eq!(parse_csv(&text).unwrap(), rows);
    }
}
