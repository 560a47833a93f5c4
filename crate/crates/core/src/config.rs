//! Experiment configuration: a TOML file with `[optics]`, `[sensing]`,
//! `[recon]` and `[dataset]` tables, plus dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{GiscError, Result};
use crate::hsi::SliceSpec;
use crate::optics::{make_phase_screen, PhaseScreen, DEFAULT_REFRACTIVE_DELTA};
use crate::recon::ReconConfig;
use crate::sensing::{
    fingerprint64, CalibrationGeometry, ColumnNorm, NoiseKind, NoiseSpec,
};
use crate::synth::band_centers;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeckleKind {
    Rayleigh,
    SuperRayleigh,
}

impl SpeckleKind {
    pub fn label(&self) -> &'static str {
        match self {
            SpeckleKind::Rayleigh => "rayleigh",
            SpeckleKind::SuperRayleigh => "super_rayleigh",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConfig {
    pub screen_size: usize,
    pub pitch_um: f64,
    pub corr_len_um: f64,
    pub refractive_delta: f64,
    pub distance_um: f64,
    pub magnification: usize,
    /// Exponent of the super-Rayleigh transform.
    pub gamma: f64,
    pub kinds: Vec<SpeckleKind>,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            screen_size: 512,
            pitch_um: 1.0,
            corr_len_um: 8.0,
            refractive_delta: DEFAULT_REFRACTIVE_DELTA,
            distance_um: 5000.0,
            magnification: 2,
            gamma: 2.0,
            kinds: vec![SpeckleKind::Rayleigh, SpeckleKind::SuperRayleigh],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    #[default]
    Auto,
    Dense,
    Convolutional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub n: usize,
    pub m: usize,
    pub bands: usize,
    pub wavelength_lo_nm: f64,
    pub wavelength_hi_nm: f64,
    pub noise: NoiseKind,
    pub snr_db: f64,
    pub column_norm: ColumnNorm,
    pub mode: ModeChoice,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            n: 16,
            m: 32,
            bands: 8,
            wavelength_lo_nm: 560.0,
            wavelength_hi_nm: 700.0,
            noise: NoiseKind::AdditiveGaussian,
            snr_db: 30.0,
            column_norm: ColumnNorm::UnitL2,
            mode: ModeChoice::Auto,
        }
    }
}

impl SensingConfig {
    pub fn wavelengths(&self) -> Result<Vec<f64>> {
        band_centers(self.wavelength_lo_nm, self.wavelength_hi_nm, self.bands)
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        match self.noise {
            NoiseKind::None => NoiseSpec::NONE,
            NoiseKind::AdditiveGaussian => NoiseSpec::gaussian(self.snr_db),
        }
    }
}

/// Synthetic block scenes used when no input cubes are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub count: usize,
    pub size: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { count: 4, size: 48 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// HSIB cubes split into train and validation slices.
    pub inputs: Vec<PathBuf>,
    /// HSIB cubes whose slices are held out for testing.
    pub test_inputs: Vec<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub slice_size: usize,
    pub stride: usize,
    pub split_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            test_inputs: Vec::new(),
            synthetic: SyntheticConfig::default(),
            slice_size: 16,
            stride: 16,
            split_fraction: 0.9,
        }
    }
}

impl DatasetConfig {
    pub fn slice_spec(&self) -> SliceSpec {
        SliceSpec {
            size: self.slice_size,
            stride: self.stride,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub optics: OpticsConfig,
    pub sensing: SensingConfig,
    pub recon: ReconConfig,
    pub dataset: DatasetConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            workers: 0,
            optics: OpticsConfig::default(),
            sensing: SensingConfig::default(),
            recon: ReconConfig::default(),
            dataset: DatasetConfig::default(),
        }
    }
}

/// Seed for one named task, a pure function of the master seed and the id.
pub fn derive_seed(master: u64, task: &str) -> u64 {
    fingerprint64(&[format!("master={master}"), format!("task={task}")])
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GiscError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GiscError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // dataset paths are relative to the config file
        if let Some(base) = path.parent() {
            for p in cfg.dataset.inputs.iter_mut().chain(cfg.dataset.test_inputs.iter_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| GiscError::Config(e.to_string()))
    }

    /// Applies `section.key=value` overrides. Values are read as TOML
    /// literals, falling back to a bare string.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut root = toml::Table::try_from(&*self).map_err(|e| GiscError::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| GiscError::Config(format!("override {item:?} is not key=value")))?;
            let value = parse_literal(raw.trim());
            let parts: Vec<&str> = key.trim().split('.').collect();
            let (last, parents) = parts.split_last().expect("split yields at least one part");
            let mut table = &mut root;
            for p in parents {
                table = table
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| GiscError::Config(format!("{key:?}: {p:?} is not a table")))?;
            }
            table.insert(last.to_string(), value);
        }
        *self = root
            .try_into()
            .map_err(|e: toml::de::Error| GiscError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.optics;
        let s = &self.sensing;
        let d = &self.dataset;
        let bad = |msg: String| Err(GiscError::Config(msg));
        if o.screen_size < 16 {
            return bad(format!("optics.screen_size must be at least 16, got {}", o.screen_size));
        }
        if !(o.pitch_um > 0.0) || !(o.corr_len_um >= o.pitch_um) {
            return bad("optics.corr_len_um must be at least optics.pitch_um > 0".into());
        }
        if !(o.distance_um >= 0.0) || !(o.refractive_delta > 0.0) {
            return bad("optics.distance_um must be >= 0 and refractive_delta > 0".into());
        }
        if o.magnification == 0 {
            return bad("optics.magnification must be positive".into());
        }
        if o.kinds.is_empty() {
            return bad("optics.kinds is empty".into());
        }
        if o.kinds.contains(&SpeckleKind::SuperRayleigh) && !(o.gamma > 1.0) {
            return bad(format!("optics.gamma must exceed 1, got {}", o.gamma));
        }
        if s.n < 4 || s.m == 0 || s.bands == 0 {
            return bad("sensing needs n >= 4, m > 0 and bands > 0".into());
        }
        let side = s.m + o.magnification * s.n;
        if side > o.screen_size {
            return bad(format!(
                "optics.screen_size {} is smaller than the {side}-px reference area",
                o.screen_size
            ));
        }
        s.wavelengths().map_err(|e| GiscError::Config(e.to_string()))?;
        if s.noise == NoiseKind::AdditiveGaussian && !s.snr_db.is_finite() {
            return bad("sensing.snr_db must be finite".into());
        }
        self.recon.validate()?;
        if d.slice_size != s.n {
            return bad(format!(
                "dataset.slice_size {} must equal sensing.n {}",
                d.slice_size, s.n
            ));
        }
        if d.stride == 0 {
            return bad("dataset.stride must be positive".into());
        }
        if !(d.split_fraction > 0.0 && d.split_fraction < 1.0) {
            return bad(format!("dataset.split_fraction must be in (0, 1), got {}", d.split_fraction));
        }
        for p in d.inputs.iter().chain(&d.test_inputs) {
            if !p.is_file() {
                return bad(format!("dataset input {} does not exist", p.display()));
            }
        }
        if d.inputs.is_empty() && d.synthetic.size < d.slice_size {
            return bad("dataset.synthetic.size is smaller than one slice".into());
        }
        Ok(())
    }

    /// Hash of everything that affects results. Output location, worker
    /// count and the solver choice are excluded; the solver is recorded next
    /// to each output instead, so one experiment can compare several.
    pub fn config_hash(&self) -> u64 {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        canonical.workers = 0;
        canonical.recon.algorithm = ReconConfig::default().algorithm;
        let json = serde_json::to_string(&canonical).expect("config serialises");
        fingerprint64(&[json])
    }

    pub fn config_hash_hex(&self) -> String {
        format!("{:016x}", self.config_hash())
    }

    pub fn screen_seed(&self) -> u64 {
        derive_seed(self.seed, "phase-screen")
    }

    pub fn phase_screen(&self) -> Result<PhaseScreen> {
        let o = &self.optics;
        make_phase_screen(self.screen_seed(), o.screen_size, o.pitch_um, o.corr_len_um)?
            .with_refractive_delta(o.refractive_delta)
    }

    pub fn calibration_geometry(&self) -> CalibrationGeometry {
        CalibrationGeometry {
            distance_um: self.optics.distance_um,
            magnification: self.optics.magnification,
            m: self.sensing.m,
        }
    }

    pub fn gamma_for(&self, kind: SpeckleKind) -> Option<f64> {
        match kind {
            SpeckleKind::Rayleigh => None,
            SpeckleKind::SuperRayleigh => Some(self.optics.gamma),
        }
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&probe) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
