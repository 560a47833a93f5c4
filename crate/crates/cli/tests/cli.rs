use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 5

[optics]
screen_size = 64
kinds = ["rayleigh"]

[sensing]
n = 12
m = 24
bands = 4

[recon]
max_iters = 20

[dataset]
slice_size = 12
stride = 12

[dataset.synthetic]
count = 1
size = 24
"#;

fn gisc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gisc"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_all_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = gisc(dir.path(), &["--config", &cfg, "--out", "run", "run-all"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("name,algorithm,speckle_kind,psnr_db,ssim,sam_rad"));
    // one summary row per algorithm
    assert_eq!(stdout.lines().count(), 4);
    for sub in ["speckles", "dataset", "measurements", "recon", "bundle", "eval"] {
        assert!(dir.path().join("run").join(sub).is_dir(), "missing {sub}");
    }
    assert!(dir.path().join("run/eval/metrics.csv").is_file());
}

#[test]
fn stages_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |stage: &[&str]| {
        let args: Vec<&str> = ["--config", cfg.as_str(), "--out", "staged"].iter().chain(stage).copied().collect();
        gisc(dir.path(), &args)
    };
    for stage in [
        &["gen-speckles"][..],
        &["slice"],
        &["measure"],
        &["reconstruct", "--algorithm", "dgi", "--max-iters", "10"],
        &["reconstruct", "--algorithm", "cs", "--max-iters", "10"],
        &["export-for-net", "--max-iters", "10"],
        &["eval"],
    ] {
        let out = run(stage);
        assert!(out.status.success(), "{stage:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(dir.path().join("staged/bundle/manifest.json").is_file());

    // solver settings are part of the experiment, so mixing them is refused
    assert!(run(&["reconstruct", "--algorithm", "gi", "--max-iters", "11"]).status.success());
    assert_eq!(run(&["eval"]).status.code(), Some(3));
}

#[test]
fn measuring_before_calibrating_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = gisc(dir.path(), &["--config", &cfg, "--out", "empty", "measure"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn changed_optics_after_measuring_is_a_pairing_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for stage in ["gen-speckles", "slice", "measure"] {
        assert!(gisc(dir.path(), &["--config", &cfg, "--out", "p", stage]).status.success());
    }
    let out = gisc(
        dir.path(),
        &["--config", &cfg, "--out", "p", "--set", "optics.corr_len_um=6.0", "reconstruct"],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_configuration_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[sensing]\nnot_a_key = 1\n").unwrap();
    let out = gisc(dir.path(), &["--config", path.to_str().unwrap(), "show-config"]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = small_config(dir.path());
    let out = gisc(dir.path(), &["--config", &cfg, "--set", "sensing.n=10", "gen-speckles"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn show_config_applies_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = gisc(dir.path(), &["--config", &cfg, "--seed", "77", "--set", "sensing.snr_db=20", "show-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed = 77"));
    assert!(text.contains("snr_db = 20.0"));
}

#[test]
fn render_writes_a_png() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    assert!(gisc(dir.path(), &["--config", &cfg, "--out", "r", "slice"]).status.success());
    let slice = std::fs::read_dir(dir.path().join("r/dataset/slices"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "hsib"))
        .unwrap();
    let png = dir.path().join("slice.png");
    let out = gisc(dir.path(), &["render", slice.to_str().unwrap(), "-o", png.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(&std::fs::read(&png).unwrap()[..4], b"\x89PNG");

    let missing = gisc(dir.path(), &["render", "nope.hsib", "-o", "x.png"]);
    assert_eq!(missing.status.code(), Some(1));
}
