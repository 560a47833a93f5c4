//! File-based experiment pipeline. Every stage reads the outputs of the
//! previous one from the output directory:
//!
//! ```text
//! speckles/<kind>/band_XX.hsib, calibration.json
//! dataset/slices/<slice>.hsib, dataset/manifest.json
//! measurements/<kind>/<slice>.hsib, <slice>.json
//! recon/<kind>/<algorithm>/<slice>.hsib, .trace.csv, .json
//! bundle/<kind>/<slice>/{y,xcs,gt}.hsib, bundle/manifest.json
//! eval/metrics.csv, eval/summary.csv
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, ExperimentConfig, ModeChoice, SpeckleKind};
use crate::error::{GiscError, Result};
use crate::hsi::{self, DatasetManifest, HsiCube, HsibImage, ManifestEntry, Role, PANCHROMATIC_NM};
use crate::io_util::write_atomic;
use crate::metrics::{self, MetricsRow};
use crate::optics::{SpecklePattern, SpeckleStatistics, SpeckleStats};
use crate::recon::{self, Algorithm, ReconConfig};
use crate::sensing::{
    build_dense_matrix, calibrate, calibration_fingerprint, CalibrationSet, ColumnNorm, Measurement,
    NoiseKind, NoiseSpec, SensingOperator, DEFAULT_DENSE_CAP_BYTES,
};
use crate::synth::block_scene;

fn hex(v: u64) -> String {
    format!("{v:016x}")
}

fn parse_hex(s: &str, what: &str) -> Result<u64> {
    u64::from_str_radix(s, 16).map_err(|_| GiscError::format(0, format!("bad {what} {s:?}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| GiscError::format(0, e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| GiscError::io(path, e))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| GiscError::format(0, format!("{}: {e}", path.display())))
}

/// Output directory layout.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn speckle_dir(&self, kind: SpeckleKind) -> PathBuf {
        self.root.join("speckles").join(kind.label())
    }

    pub fn calibration_record(&self, kind: SpeckleKind) -> PathBuf {
        self.speckle_dir(kind).join("calibration.json")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn manifest(&self) -> PathBuf {
        self.dataset_dir().join("manifest.json")
    }

    pub fn measurement(&self, kind: SpeckleKind, slice: &str) -> PathBuf {
        self.root.join("measurements").join(kind.label()).join(format!("{slice}.hsib"))
    }

    pub fn recon_dir(&self, kind: SpeckleKind, algorithm: &str) -> PathBuf {
        self.root.join("recon").join(kind.label()).join(algorithm)
    }

    pub fn bundle_dir(&self) -> PathBuf {
        self.root.join("bundle")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Slice name from a manifest entry (`slices/<name>.hsib`).
pub fn slice_name(entry: &ManifestEntry) -> String {
    Path::new(&entry.cube)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| entry.cube.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandContrast {
    pub wavelength_nm: f64,
    pub mean: f64,
    pub stddev: f64,
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub kind: SpeckleKind,
    pub gamma: Option<f64>,
    pub calibration_fingerprint: String,
    pub config_hash: String,
    pub n: usize,
    pub m: usize,
    pub magnification: usize,
    pub wavelengths_nm: Vec<f64>,
    pub files: Vec<String>,
    pub contrast: Vec<BandContrast>,
    pub mean_contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSidecar {
    pub noise_kind: NoiseKind,
    /// Absent for noiseless measurements.
    pub target_snr_db: Option<f64>,
    pub seed: u64,
    pub operator_fingerprint: String,
    pub config_hash: String,
    pub speckle_kind: SpeckleKind,
    pub slice: String,
    pub sampling_rate: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconSidecar {
    pub algorithm: Algorithm,
    pub speckle_kind: SpeckleKind,
    pub slice: String,
    pub config_hash: String,
    pub operator_fingerprint: String,
    pub column_norm: ColumnNorm,
    pub recon: ReconConfig,
    pub iterations_used: usize,
    pub step: Option<f64>,
    pub tau: Option<f64>,
    pub final_objective: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub speckle_kind: SpeckleKind,
    pub slice: String,
    pub role: Role,
    pub y: String,
    pub xcs: String,
    pub gt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub config_hash: String,
    pub n: usize,
    pub m: usize,
    pub bands: usize,
    pub wavelengths_nm: Vec<f64>,
    pub entries: Vec<BundleEntry>,
}

/// Runs `f` on a pool with the configured worker count.
pub fn with_workers<T: Send>(cfg: &ExperimentConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| GiscError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Generates and stores the reference speckles for every configured kind.
pub fn gen_speckles(cfg: &ExperimentConfig) -> Result<Vec<CalibrationRecord>> {
    cfg.validate()?;
    let ws = Workspace::new(&cfg.out_dir);
    let screen = cfg.phase_screen()?;
    let geometry = cfg.calibration_geometry();
    let wavelengths = cfg.sensing.wavelengths()?;
    let mut records = Vec::new();
    for &kind in &cfg.optics.kinds {
        let gamma = cfg.gamma_for(kind);
        let calib = calibrate(&screen, &geometry, &wavelengths, cfg.sensing.n, gamma)?;
        let dir = ws.speckle_dir(kind);
        let mut files = Vec::new();
        let mut contrast = Vec::new();
        for (b, p) in calib.reference_patterns.iter().enumerate() {
            let file = format!("band_{b:02}.hsib");
            HsibImage::single_band(&p.intensity, p.wavelength_nm, format!("{}_{b:02}", kind.label()))
                .write(dir.join(&file))?;
            let s = SpeckleStats::from_samples(p.intensity.iter())?;
            contrast.push(BandContrast {
                wavelength_nm: p.wavelength_nm,
                mean: s.mean,
                stddev: s.stddev,
                contrast: s.contrast,
            });
            files.push(file);
        }
        let mean_contrast = contrast.iter().map(|c| c.contrast).sum::<f64>() / contrast.len() as f64;
        let record = CalibrationRecord {
            kind,
            gamma,
            calibration_fingerprint: hex(calib.fingerprint),
            config_hash: cfg.config_hash_hex(),
            n: calib.n,
            m: calib.m,
            magnification: calib.magnification,
            wavelengths_nm: calib.wavelengths_nm.clone(),
            files,
            contrast,
            mean_contrast,
        };
        write_json(&ws.calibration_record(kind), &record)?;
        info!(
            "{}: {} reference patterns, mean contrast {:.3}",
            kind.label(),
            calib.bands(),
            mean_contrast
        );
        records.push(record);
    }
    Ok(records)
}

/// Loads a stored calibration and checks it matches what `cfg` would
/// generate.
pub fn load_calibration(cfg: &ExperimentConfig, kind: SpeckleKind) -> Result<CalibrationSet> {
    let ws = Workspace::new(&cfg.out_dir);
    let path = ws.calibration_record(kind);
    if !path.is_file() {
        return Err(GiscError::Config(format!(
            "no calibration at {}; run gen-speckles first",
            path.display()
        )));
    }
    let record: CalibrationRecord = read_json(&path)?;
    let stored = parse_hex(&record.calibration_fingerprint, "calibration fingerprint")?;
    let wavelengths = cfg.sensing.wavelengths()?;
    let expected = calibration_fingerprint(
        &cfg.phase_screen()?,
        &cfg.calibration_geometry(),
        &wavelengths,
        cfg.sensing.n,
        cfg.gamma_for(kind),
    );
    if stored != expected {
        return Err(GiscError::Pairing(format!(
            "calibration {} has fingerprint {stored:016x} but the configuration implies {expected:016x}",
            path.display()
        )));
    }
    let statistics = match record.gamma {
        Some(gamma) => SpeckleStatistics::SuperRayleigh { gamma },
        None => SpeckleStatistics::Rayleigh,
    };
    let dir = ws.speckle_dir(kind);
    let patterns = record
        .files
        .iter()
        .zip(&record.wavelengths_nm)
        .map(|(f, &wl)| {
            let img = HsibImage::read(dir.join(f))?;
            Ok(SpecklePattern {
                intensity: img.band_f64(0),
                wavelength_nm: wl,
                statistics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CalibrationSet::from_parts(
        patterns,
        record.wavelengths_nm,
        record.magnification,
        record.n,
        record.m,
        stored,
    )
}

pub fn build_operator(cfg: &ExperimentConfig, calib: CalibrationSet) -> Result<SensingOperator> {
    let norm = cfg.sensing.column_norm;
    match cfg.sensing.mode {
        ModeChoice::Auto => SensingOperator::auto(calib, norm),
        ModeChoice::Dense => build_dense_matrix(calib, norm, DEFAULT_DENSE_CAP_BYTES),
        ModeChoice::Convolutional => SensingOperator::convolutional(calib, norm),
    }
}

pub fn load_operator(cfg: &ExperimentConfig, kind: SpeckleKind) -> Result<SensingOperator> {
    build_operator(cfg, load_calibration(cfg, kind)?)
}

/// Band-selects and slices the configured cubes (or synthetic scenes) and
/// writes the dataset manifest with its train/val split.
pub fn slice_dataset(cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let ws = Workspace::new(&cfg.out_dir);
    let wavelengths = cfg.sensing.wavelengths()?;
    let spec = cfg.dataset.slice_spec();

    let mut sources: Vec<(HsiCube, bool)> = Vec::new();
    let d = &cfg.dataset;
    if d.inputs.is_empty() && d.test_inputs.is_empty() {
        for i in 0..d.synthetic.count {
            let cube = block_scene(d.synthetic.size, &wavelengths, derive_seed(cfg.seed, &format!("scene/{i}")))?;
            sources.push((cube, false));
        }
    }
    for (path, test) in d.inputs.iter().map(|p| (p, false)).chain(d.test_inputs.iter().map(|p| (p, true))) {
        let mut cube = hsi::load_hsib(path)?;
        cube.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| cube.name.clone());
        let selected = hsi::select_bands(&cube, cfg.sensing.wavelength_lo_nm, cfg.sensing.wavelength_hi_nm)?;
        if selected.bands() != cfg.sensing.bands {
            return Err(GiscError::Config(format!(
                "{} has {} bands in [{}, {}] nm, sensing expects {}",
                path.display(),
                selected.bands(),
                cfg.sensing.wavelength_lo_nm,
                cfg.sensing.wavelength_hi_nm,
                cfg.sensing.bands
            )));
        }
        sources.push((selected, test));
    }

    let slice_dir = ws.dataset_dir().join("slices");
    let mut entries = Vec::new();
    for (cube, test) in &sources {
        let slices = hsi::slice(cube, spec)?;
        slices.par_iter().try_for_each(|s| hsi::store_hsib(s, slice_dir.join(format!("{}.hsib", s.name))))?;
        for (i, s) in slices.iter().enumerate() {
            entries.push(ManifestEntry {
                cube: format!("slices/{}.hsib", s.name),
                role: if *test { Role::Test } else { Role::Train },
                slice: i,
            });
        }
    }
    let base = DatasetManifest {
        entries,
        seed: 0,
        split_fraction: d.split_fraction,
    };
    let manifest = hsi::split(&base, d.split_fraction, derive_seed(cfg.seed, "split"))?;
    manifest.store(ws.manifest())?;
    info!(
        "{} slices: {} train, {} val, {} test",
        manifest.entries.len(),
        manifest.count(Role::Train),
        manifest.count(Role::Val),
        manifest.count(Role::Test)
    );
    Ok(manifest)
}

fn load_manifest(ws: &Workspace) -> Result<DatasetManifest> {
    let path = ws.manifest();
    if !path.is_file() {
        return Err(GiscError::Config(format!("no dataset manifest at {}; run slice first", path.display())));
    }
    DatasetManifest::load(path)
}

fn load_slice(ws: &Workspace, entry: &ManifestEntry) -> Result<HsiCube> {
    hsi::load_hsib(ws.dataset_dir().join(&entry.cube))
}

/// Simulates one measurement per slice and speckle kind.
pub fn measure(cfg: &ExperimentConfig) -> Result<usize> {
    cfg.validate()?;
    let ws = Workspace::new(&cfg.out_dir);
    let manifest = load_manifest(&ws)?;
    let noise = cfg.sensing.noise_spec();
    let mut count = 0;
    for &kind in &cfg.optics.kinds {
        let op = load_operator(cfg, kind)?;
        let (num, den) = op.sampling_rate().reduced();
        manifest.entries.par_iter().try_for_each(|entry| -> Result<()> {
            let name = slice_name(entry);
            let x = load_slice(&ws, entry)?;
            let seed = derive_seed(cfg.seed, &format!("measure/{}/{name}", kind.label()));
            let y = op.forward(&x, noise, seed)?;
            let path = ws.measurement(kind, &name);
            HsibImage::single_band(&y.image, PANCHROMATIC_NM, name.clone()).write(&path)?;
            write_json(
                &sidecar(&path),
                &MeasurementSidecar {
                    noise_kind: noise.kind,
                    target_snr_db: (noise.kind != NoiseKind::None).then_some(noise.target_snr_db),
                    seed,
                    operator_fingerprint: hex(y.operator_fingerprint),
                    config_hash: cfg.config_hash_hex(),
                    speckle_kind: kind,
                    slice: name,
                    sampling_rate: format!("{num}/{den}"),
                },
            )
        })?;
        count += manifest.entries.len();
        info!("{}: {} measurements at sampling rate {num}/{den}", kind.label(), manifest.entries.len());
    }
    Ok(count)
}

/// Reads a stored measurement with its provenance.
pub fn load_measurement(path: &Path) -> Result<Measurement> {
    let meta: MeasurementSidecar = read_json(&sidecar(path))?;
    let img = HsibImage::read(path)?;
    Ok(Measurement {
        image: img.band_f64(0),
        noise: match (meta.noise_kind, meta.target_snr_db) {
            (NoiseKind::AdditiveGaussian, Some(snr)) => NoiseSpec::gaussian(snr),
            _ => NoiseSpec::NONE,
        },
        seed: meta.seed,
        operator_fingerprint: parse_hex(&meta.operator_fingerprint, "operator fingerprint")?,
    })
}

fn reconstruct_one(
    cfg: &ExperimentConfig,
    ws: &Workspace,
    op: &SensingOperator,
    kind: SpeckleKind,
    name: &str,
) -> Result<PathBuf> {
    let y = load_measurement(&ws.measurement(kind, name))?;
    let result = recon::reconstruct(&y, op, &cfg.recon)?;
    let alg = cfg.recon.algorithm.label();
    let dir = ws.recon_dir(kind, alg);
    let path = dir.join(format!("{name}.hsib"));
    let mut out = result.exported();
    out.name = name.to_string();
    hsi::store_hsib(&out, &path)?;
    if !result.objective_trace.is_empty() {
        write_atomic(&dir.join(format!("{name}.trace.csv")), result.trace_csv().as_bytes())?;
    }
    write_json(
        &sidecar(&path),
        &ReconSidecar {
            algorithm: cfg.recon.algorithm,
            speckle_kind: kind,
            slice: name.to_string(),
            config_hash: cfg.config_hash_hex(),
            operator_fingerprint: hex(op.fingerprint()),
            column_norm: op.column_norm(),
            recon: cfg.recon,
            iterations_used: result.iterations_used,
            step: result.step,
            tau: result.tau,
            final_objective: result.objective_trace.last().copied(),
            wall_time_s: result.wall_time_s,
        },
    )?;
    Ok(path)
}

/// Reconstructs every measurement with `cfg.recon`, in parallel over slices.
pub fn reconstruct(cfg: &ExperimentConfig) -> Result<usize> {
    cfg.validate()?;
    let ws = Workspace::new(&cfg.out_dir);
    let manifest = load_manifest(&ws)?;
    let mut count = 0;
    for &kind in &cfg.optics.kinds {
        let op = load_operator(cfg, kind)?;
        manifest
            .entries
            .par_iter()
            .try_for_each(|e| reconstruct_one(cfg, &ws, &op, kind, &slice_name(e)).map(|_| ()))?;
        count += manifest.entries.len();
        info!(
            "{}: {} reconstructions with {}",
            kind.label(),
            manifest.entries.len(),
            cfg.recon.algorithm.label()
        );
    }
    Ok(count)
}

/// Writes `(Y, X_cs, ground truth)` triples for the network. Missing
/// compressive reconstructions are computed with the configured solver
/// settings.
pub fn export_for_net(cfg: &ExperimentConfig) -> Result<BundleManifest> {
    cfg.validate()?;
    let ws = Workspace::new(&cfg.out_dir);
    let manifest = load_manifest(&ws)?;
    let mut cs_cfg = cfg.clone();
    cs_cfg.recon.algorithm = Algorithm::CsFista;
    let bundle = ws.bundle_dir();
    let mut entries = Vec::new();
    for &kind in &cfg.optics.kinds {
        let op = load_operator(cfg, kind)?;
        let kind_entries = manifest
            .entries
            .par_iter()
            .map(|e| -> Result<BundleEntry> {
                let name = slice_name(e);
                let xcs_src = ws.recon_dir(kind, Algorithm::CsFista.label()).join(format!("{name}.hsib"));
                if !xcs_src.is_file() {
                    reconstruct_one(&cs_cfg, &ws, &op, kind, &name)?;
                }
                let rel = PathBuf::from(kind.label()).join(&name);
                let dir = bundle.join(&rel);
                let y_bytes = std::fs::read(ws.measurement(kind, &name))
                    .map_err(|err| GiscError::io(ws.measurement(kind, &name), err))?;
                write_atomic(&dir.join("y.hsib"), &y_bytes)?;
                let xcs_bytes = std::fs::read(&xcs_src).map_err(|err| GiscError::io(&xcs_src, err))?;
                write_atomic(&dir.join("xcs.hsib"), &xcs_bytes)?;
                hsi::store_hsib(&load_slice(&ws, e)?, dir.join("gt.hsib"))?;
                let as_str = |f: &str| rel.join(f).to_string_lossy().into_owned();
                Ok(BundleEntry {
                    speckle_kind: kind,
                    slice: name.clone(),
                    role: e.role,
                    y: as_str("y.hsib"),
                    xcs: as_str("xcs.hsib"),
                    gt: as_str("gt.hsib"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        entries.extend(kind_entries);
    }
    let out = BundleManifest {
        config_hash: cfg.config_hash_hex(),
        n: cfg.sensing.n,
        m: cfg.sensing.m,
        bands: cfg.sensing.bands,
        wavelengths_nm: cfg.sensing.wavelengths()?,
        entries,
    };
    write_json(&bundle.join("manifest.json"), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub rows: Vec<MetricsRow>,
    /// One mean row per (speckle kind, algorithm), in sorted order.
    pub summary: Vec<MetricsRow>,
}

fn list_estimates(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| GiscError::io(dir, e))? {
        let path = entry.map_err(|e| GiscError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "hsib") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Scores every reconstruction under `recon/` against its ground-truth
/// slice. Estimates produced elsewhere (without a sidecar) are scored too;
/// estimates whose sidecars carry different configuration hashes are
/// rejected.
pub fn eval(cfg: &ExperimentConfig) -> Result<EvalOutput> {
    let ws = Workspace::new(&cfg.out_dir);
    let manifest = load_manifest(&ws)?;
    let truth: BTreeMap<String, &ManifestEntry> =
        manifest.entries.iter().map(|e| (slice_name(e), e)).collect();

    let mut jobs = Vec::new();
    let mut hashes = BTreeMap::<String, PathBuf>::new();
    for kind in [SpeckleKind::Rayleigh, SpeckleKind::SuperRayleigh] {
        let kind_dir = ws.root.join("recon").join(kind.label());
        if !kind_dir.is_dir() {
            continue;
        }
        let mut algs: Vec<PathBuf> = std::fs::read_dir(&kind_dir)
            .map_err(|e| GiscError::io(&kind_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        algs.sort();
        for alg_dir in algs {
            let alg = alg_dir.file_name().unwrap().to_string_lossy().into_owned();
            for est in list_estimates(&alg_dir)? {
                let name = est.file_stem().unwrap().to_string_lossy().into_owned();
                if !truth.contains_key(&name) {
                    warn!("{}: no ground-truth slice named {name}, skipped", est.display());
                    continue;
                }
                let meta = sidecar(&est);
                if meta.is_file() {
                    let sc: serde_json::Value = read_json(&meta)?;
                    if let Some(h) = sc.get("config_hash").and_then(|v| v.as_str()) {
                        hashes.entry(h.to_string()).or_insert_with(|| est.clone());
                    }
                }
                jobs.push((kind, alg.clone(), name, est));
            }
        }
    }
    if hashes.len() > 1 {
        let listing: Vec<String> = hashes.iter().map(|(h, p)| format!("{h} ({})", p.display())).collect();
        return Err(GiscError::Pairing(format!(
            "reconstructions come from different configurations: {}",
            listing.join(", ")
        )));
    }
    if jobs.is_empty() {
        return Err(GiscError::Config(format!(
            "no reconstructions under {}; run reconstruct first",
            ws.root.join("recon").display()
        )));
    }

    let rows = jobs
        .par_iter()
        .map(|(kind, alg, name, est)| {
            let x = load_slice(&ws, truth[name])?;
            let y = hsi::load_hsib(est)?;
            Ok(MetricsRow {
                name: name.clone(),
                algorithm: alg.clone(),
                speckle_kind: kind.label().to_string(),
                report: metrics::evaluate(&x, &y)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut groups: BTreeMap<(String, String), Vec<MetricsRow>> = BTreeMap::new();
    for r in &rows {
        groups
            .entry((r.speckle_kind.clone(), r.algorithm.clone()))
            .or_default()
            .push(r.clone());
    }
    let summary = groups
        .into_iter()
        .map(|((kind, alg), members)| {
            Ok(MetricsRow {
                name: "MEAN".into(),
                algorithm: alg,
                speckle_kind: kind,
                report: metrics::mean_report(&members)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let dir = ws.eval_dir();
    write_atomic(&dir.join("metrics.csv"), metrics::to_csv(&rows)?.as_bytes())?;
    let mut text = String::from(metrics::CSV_HEADER);
    text.push('\n');
    for r in &summary {
        text.push_str(&r.csv_line());
        text.push('\n');
    }
    write_atomic(&dir.join("summary.csv"), text.as_bytes())?;
    Ok(EvalOutput { rows, summary })
}

/// Every stage in order, running all three classical solvers.
pub fn run_all(cfg: &ExperimentConfig) -> Result<EvalOutput> {
    gen_speckles(cfg)?;
    slice_dataset(cfg)?;
    measure(cfg)?;
    for alg in [Algorithm::Gi, Algorithm::Dgi, Algorithm::CsFista] {
        let mut c = cfg.clone();
        c.recon.algorithm = alg;
        reconstruct(&c)?;
    }
    export_for_net(cfg)?;
    eval(cfg)
}

/// Measurement image as a 2-D array, for rendering and inspection.
pub fn measurement_image(path: &Path) -> Result<Array2<f64>> {
    Ok(HsibImage::read(path)?.band_f64(0))
}
