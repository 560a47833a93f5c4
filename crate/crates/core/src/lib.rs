//! Simulation, reconstruction and evaluation for a speckle-based snapshot
//! spectral camera.

pub mod config;
pub mod dct;
pub mod error;
pub mod fft;
pub mod hsi;
pub mod io_util;
pub mod metrics;
pub mod optics;
pub mod pipeline;
pub mod recon;
pub mod render;
pub mod sensing;
pub mod synth;

pub use config::{ExperimentConfig, SpeckleKind};
pub use error::{GiscError, Result};
pub use hsi::{HsiCube, HsibImage};
pub use metrics::MetricsReport;
pub use optics::{PhaseScreen, SpeckleGeometry, SpecklePattern, SpeckleStatistics};
pub use recon::{Algorithm, ReconConfig, ReconResult, Transform};
pub use sensing::{
    CalibrationSet, ColumnNorm, LinearOperator, Measurement, NoiseSpec, OperatorMode, SensingOperator,
};
