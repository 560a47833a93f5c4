//! Classical reconstructions: correlation ghost imaging, differential ghost
//! imaging, and ℓ1-regularised least squares solved by FISTA.

use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dct::Dct2;
use crate::error::{GiscError, Result};
use crate::hsi::HsiCube;
use crate::sensing::{LinearOperator, Measurement, SensingOperator};

pub const POWER_ITERATIONS: usize = 50;
pub const STEP_SAFETY: f64 = 0.95;
pub const DEFAULT_TAU_FRACTION: f64 = 1e-3;
/// Objective growth beyond this multiple of the starting value aborts the solve.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gi,
    Dgi,
    CsFista,
}

impl Algorithm {
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Gi => "gi",
            Algorithm::Dgi => "dgi",
            Algorithm::CsFista => "cs_fista",
        }
    }
}

impl FromStr for Algorithm {
    type Err = GiscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gi" => Ok(Algorithm::Gi),
            "dgi" => Ok(Algorithm::Dgi),
            "cs_fista" | "cs" | "fista" => Ok(Algorithm::CsFista),
            other => Err(GiscError::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    Dct2PerBand,
}

impl FromStr for Transform {
    type Err = GiscError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Transform::Identity),
            "dct2_per_band" | "dct" => Ok(Transform::Dct2PerBand),
            other => Err(GiscError::Config(format!("unknown transform {other:?}"))),
        }
    }
}

/// Solver settings. `step` and `tau` fall back to their automatic rules when
/// `None`: `0.95 / L` from a power-iteration estimate of `L = ‖AᵀA‖`, and
/// `1e-3 · ‖Aᵀy‖∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub step: Option<f64>,
    pub tau: Option<f64>,
    pub tol: f64,
    pub transform: Transform,
    /// `false` runs plain ISTA.
    pub momentum: bool,
    /// Restricts the solution to `x ≥ 0` (identity transform only).
    pub nonnegative: bool,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::CsFista,
            max_iters: 200,
            step: None,
            tau: None,
            tol: 1e-5,
            transform: Transform::Identity,
            momentum: true,
            nonnegative: false,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(GiscError::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(GiscError::Config(format!("tol must be in (0, 1), got {}", self.tol)));
        }
        if let Some(t) = self.tau {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(GiscError::Config(format!("tau must be >= 0, got {t}")));
            }
        }
        if let Some(s) = self.step {
            if !(s > 0.0 && s.is_finite()) {
                return Err(GiscError::Config(format!("step must be positive, got {s}")));
            }
        }
        if self.nonnegative && self.transform != Transform::Identity {
            return Err(GiscError::Config(
                "nonnegative is only supported with the identity transform".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    /// Unclamped estimate.
    pub estimate: HsiCube,
    /// Objective before the first iteration followed by one value per
    /// iteration. Correlation methods leave it empty.
    pub objective_trace: Vec<f64>,
    /// Milliseconds since the solve started, aligned with `objective_trace`.
    pub trace_wall_ms: Vec<f64>,
    pub iterations_used: usize,
    pub wall_time_s: f64,
    /// Step and sparsity weight actually used.
    pub step: Option<f64>,
    pub tau: Option<f64>,
}

impl ReconResult {
    /// The estimate clamped into `[0, 1]`, as written to disk.
    pub fn exported(&self) -> HsiCube {
        let mut cube = self.estimate.clone();
        cube.data.mapv_inplace(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        cube
    }

    /// `iter,objective,wall_ms` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,objective,wall_ms\n");
        for (i, (obj, ms)) in self.objective_trace.iter().zip(&self.trace_wall_ms).enumerate() {
            out.push_str(&format!("{i},{obj:.17e},{ms:.3}\n"));
        }
        out
    }
}

/// Elementwise `sign(v) · max(|v| - θ, 0)`.
pub fn soft_threshold(values: &[f64], theta: f64) -> Result<Vec<f64>> {
    if !(theta >= 0.0) {
        return Err(GiscError::InvalidParameter(format!(
            "threshold must be nonnegative, got {theta}"
        )));
    }
    Ok(values.iter().map(|&v| shrink(v, theta)).collect())
}

#[inline]
fn shrink(v: f64, theta: f64) -> f64 {
    let mag = v.abs() - theta;
    if mag > 0.0 {
        mag.copysign(v)
    } else {
        0.0
    }
}

fn check_pairing(y: &Measurement, op: &SensingOperator) -> Result<()> {
    if y.operator_fingerprint != op.fingerprint() {
        return Err(GiscError::Pairing(format!(
            "measurement was taken with operator {:016x}, reconstruction uses {:016x}",
            y.operator_fingerprint,
            op.fingerprint()
        )));
    }
    let m = op.m();
    if y.image.dim() != (m, m) {
        return Err(GiscError::Shape(format!(
            "measurement is {:?}, operator expects {m}x{m}",
            y.image.dim()
        )));
    }
    Ok(())
}

/// Rescales into `[0, 1]`; a constant vector maps to zeros.
pub fn min_max_normalize(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for v in values.iter_mut() {
        *v = (*v - lo) / span;
    }
}

/// Centered intensity correlation `(1/J) Σ_j (y_j − ȳ)(Φ_jk − Φ̄_k)`,
/// before normalisation.
pub fn gi_correlate_raw(y: &[f64], op: &dyn LinearOperator) -> Vec<f64> {
    let j = y.len() as f64;
    let mean = y.iter().sum::<f64>() / j;
    // Σ_j (y_j − ȳ) Φ̄_k vanishes, so centering y alone is enough
    let centered: Vec<f64> = y.iter().map(|v| (v - mean) / j).collect();
    op.apply_adjoint(&centered)
}

/// Differential correlation `⟨y S_k⟩ − (⟨y⟩/⟨R⟩)⟨R S_k⟩` with averages over
/// detector pixels and `R = Φ·1`, before normalisation.
pub fn dgi_raw(y: &[f64], op: &dyn LinearOperator) -> Result<Vec<f64>> {
    let j = y.len() as f64;
    let reference = op.apply(&vec![1.0; op.cols()]);
    let mean_r = reference.iter().sum::<f64>() / j;
    if mean_r == 0.0 || !mean_r.is_finite() {
        return Err(GiscError::Numeric(
            "degenerate calibration: mean total reference intensity is zero".into(),
        ));
    }
    let mean_y = y.iter().sum::<f64>() / j;
    let ratio = mean_y / mean_r;
    let weights: Vec<f64> = y
        .iter()
        .zip(&reference)
        .map(|(yi, ri)| (yi - ratio * ri) / j)
        .collect();
    Ok(op.apply_adjoint(&weights))
}

fn correlation_result(
    mut raw: Vec<f64>,
    op: &SensingOperator,
    name: &str,
    started: Instant,
) -> Result<ReconResult> {
    min_max_normalize(&mut raw);
    Ok(ReconResult {
        estimate: op.vector_to_cube(&raw, name)?,
        objective_trace: Vec::new(),
        trace_wall_ms: Vec::new(),
        iterations_used: 1,
        wall_time_s: started.elapsed().as_secs_f64(),
        step: None,
        tau: None,
    })
}

pub fn gi_correlate(y: &Measurement, op: &SensingOperator) -> Result<ReconResult> {
    check_pairing(y, op)?;
    let started = Instant::now();
    let raw = gi_correlate_raw(&y.as_vec(), op);
    correlation_result(raw, op, "gi", started)
}

pub fn dgi(y: &Measurement, op: &SensingOperator) -> Result<ReconResult> {
    check_pairing(y, op)?;
    let started = Instant::now();
    let raw = dgi_raw(&y.as_vec(), op)?;
    correlation_result(raw, op, "dgi", started)
}

/// Runs whichever algorithm `cfg` names.
pub fn reconstruct(y: &Measurement, op: &SensingOperator, cfg: &ReconConfig) -> Result<ReconResult> {
    match cfg.algorithm {
        Algorithm::Gi => gi_correlate(y, op),
        Algorithm::Dgi => dgi(y, op),
        Algorithm::CsFista => cs_reconstruct(y, op, cfg),
    }
}

/// `Φ Ψᵀ`: the sensing operator acting on per-band DCT coefficients.
struct DctSynthesis<'a> {
    op: &'a dyn LinearOperator,
    dct: Dct2,
}

impl LinearOperator for DctSynthesis<'_> {
    fn rows(&self) -> usize {
        self.op.rows()
    }

    fn cols(&self) -> usize {
        self.op.cols()
    }

    fn apply(&self, coeffs: &[f64]) -> Vec<f64> {
        self.op.apply(&self.dct.inverse(coeffs))
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.dct.forward(&self.op.apply_adjoint(y))
    }
}

/// Solves `min ½‖Φx − y‖² + τ‖Ψx‖₁`.
pub fn cs_reconstruct(y: &Measurement, op: &SensingOperator, cfg: &ReconConfig) -> Result<ReconResult> {
    check_pairing(y, op)?;
    cfg.validate()?;
    let started = Instant::now();
    let rhs = y.as_vec();
    let out = match cfg.transform {
        Transform::Identity => fista(op, &rhs, cfg)?,
        Transform::Dct2PerBand => {
            let synth = DctSynthesis {
                op,
                dct: Dct2::new(op.n()),
            };
            let mut out = fista(&synth, &rhs, cfg)?;
            out.x = synth.dct.inverse(&out.x);
            out
        }
    };
    Ok(ReconResult {
        estimate: op.vector_to_cube(&out.x, "cs_fista")?,
        objective_trace: out.trace,
        trace_wall_ms: out.wall_ms,
        iterations_used: out.iterations,
        wall_time_s: started.elapsed().as_secs_f64(),
        step: Some(out.step),
        tau: Some(out.tau),
    })
}

/// Largest eigenvalue of `AᵀA` by power iteration from a fixed random start.
pub fn estimate_lipschitz(op: &dyn LinearOperator, iterations: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..op.cols()).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let norm = norm2(&v);
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        let w = op.apply_adjoint(&op.apply(&v));
        estimate = dot(&v, &w);
        v = w;
    }
    estimate
}

#[derive(Debug, Clone)]
pub struct FistaOutput {
    pub x: Vec<f64>,
    pub trace: Vec<f64>,
    pub wall_ms: Vec<f64>,
    pub iterations: usize,
    pub step: f64,
    pub tau: f64,
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(ax: &[f64], b: &[f64], x: &[f64], tau: f64) -> f64 {
    let fit: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    0.5 * fit + tau * l1
}

/// Accelerated proximal gradient for `½‖Ax − b‖² + τ‖x‖₁` from `x = 0`,
/// with gradient-based adaptive restart of the momentum.
///
/// `A` is applied once forward and once adjoint per iteration: the image of
/// the extrapolated point is formed from the images of the last two iterates.
pub fn fista(op: &dyn LinearOperator, b: &[f64], cfg: &ReconConfig) -> Result<FistaOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let cols = op.cols();
    if b.len() != op.rows() {
        return Err(GiscError::Shape(format!(
            "right-hand side has {} entries, operator has {} rows",
            b.len(),
            op.rows()
        )));
    }

    let step = match cfg.step {
        Some(s) => s,
        None => {
            let l = estimate_lipschitz(op, POWER_ITERATIONS);
            if !(l > 0.0 && l.is_finite()) {
                return Err(GiscError::Numeric(format!("Lipschitz estimate is {l}")));
            }
            STEP_SAFETY / l
        }
    };
    let tau = match cfg.tau {
        Some(t) => t,
        None => {
            let atb = op.apply_adjoint(b);
            DEFAULT_TAU_FRACTION * atb.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        }
    };

    let mut x = vec![0.0; cols];
    let mut ax = vec![0.0; b.len()];
    let mut z = x.clone();
    let mut az = ax.clone();
    let mut t = 1.0f64;

    let initial = objective(&ax, b, &x, tau);
    let mut trace = vec![initial];
    let mut wall_ms = vec![started.elapsed().as_secs_f64() * 1e3];
    let mut iterations = 0;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        let residual: Vec<f64> = az.iter().zip(b).map(|(p, q)| p - q).collect();
        let grad = op.apply_adjoint(&residual);
        let x_new: Vec<f64> = z
            .iter()
            .zip(&grad)
            .map(|(zi, gi)| {
                let v = shrink(zi - step * gi, step * tau);
                if cfg.nonnegative { v.max(0.0) } else { v }
            })
            .collect();
        let ax_new = op.apply(&x_new);

        let f = objective(&ax_new, b, &x_new, tau);
        trace.push(f);
        wall_ms.push(started.elapsed().as_secs_f64() * 1e3);
        if !f.is_finite() || (initial > 0.0 && f > DIVERGENCE_FACTOR * initial) {
            return Err(GiscError::Numeric(format!(
                "solver diverged at iteration {iterations} (objective {f:e} vs initial {initial:e}); use the automatic step size"
            )));
        }

        let delta = x_new.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let prev_norm = norm2(&x);

        let beta = if cfg.momentum {
            // restart the momentum once it points uphill
            let uphill: f64 = (0..cols).map(|i| (z[i] - x_new[i]) * (x_new[i] - x[i])).sum();
            if uphill > 0.0 {
                t = 1.0;
            }
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_new;
            t = t_new;
            beta
        } else {
            0.0
        };
        for i in 0..cols {
            z[i] = x_new[i] + beta * (x_new[i] - x[i]);
        }
        for j in 0..az.len() {
            az[j] = ax_new[j] + beta * (ax_new[j] - ax[j]);
        }
        x = x_new;
        ax = ax_new;

        let converged = if prev_norm > 0.0 {
            delta <= cfg.tol * prev_norm
        } else {
            delta == 0.0
        };
        if converged {
            break;
        }
    }

    Ok(FistaOutput {
        x,
        trace,
        wall_ms,
        iterations,
        step,
        tau,
    })
}
