use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gisc_core::config::ExperimentConfig;
use gisc_core::pipeline;
use gisc_core::recon::{Algorithm, Transform};
use gisc_core::{hsi, render, GiscError};

#[derive(Parser, Debug)]
#[command(name = "gisc", version, about = "Speckle spectral camera simulator and benchmark")]
struct Cli {
    /// TOML experiment configuration. Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set sensing.snr_db=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the reference speckles for every configured speckle kind.
    GenSpeckles,
    /// Cut the input cubes (or synthetic scenes) into slices and split them.
    Slice,
    /// Simulate one detector image per slice and speckle kind.
    Measure,
    /// Reconstruct every measurement.
    Reconstruct(ReconArgs),
    /// Write measurement / CS estimate / ground-truth triples for training.
    ExportForNet(ReconArgs),
    /// Score reconstructions and write per-slice and summary tables.
    Eval,
    /// Render a cube as a pseudo-colour PNG.
    Render {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run every stage with all three classical solvers.
    RunAll,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

#[derive(Args, Debug)]
struct ReconArgs {
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Fixed step size; automatic when omitted.
    #[arg(long)]
    step: Option<f64>,
    /// Sparsity weight; automatic when omitted.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_parser = parse_transform)]
    transform: Option<Transform>,
    /// Plain ISTA instead of the accelerated iteration.
    #[arg(long)]
    no_momentum: bool,
    /// Constrain the estimate to be nonnegative.
    #[arg(long)]
    nonnegative: bool,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: GiscError| e.to_string())
}

fn parse_transform(s: &str) -> Result<Transform, String> {
    s.parse().map_err(|e: GiscError| e.to_string())
}

impl ReconArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let r = &mut cfg.recon;
        if let Some(a) = self.algorithm {
            r.algorithm = a;
        }
        if let Some(v) = self.max_iters {
            r.max_iters = v;
        }
        if self.step.is_some() {
            r.step = self.step;
        }
        if self.tau.is_some() {
            r.tau = self.tau;
        }
        if let Some(v) = self.tol {
            r.tol = v;
        }
        if let Some(t) = self.transform {
            r.transform = t;
        }
        if self.no_momentum {
            r.momentum = false;
        }
        if self.nonnegative {
            r.nonnegative = true;
        }
    }
}

fn load_config(cli: &Cli) -> gisc_core::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    match &cli.command {
        Command::Reconstruct(args) | Command::ExportForNet(args) => args.apply(&mut cfg),
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> gisc_core::Result<()> {
    let cfg = load_config(cli)?;
    if let Command::Render { input, output } = &cli.command {
        let cube = hsi::load_hsib(input)?;
        return render::render_png(&cube, output);
    }
    if let Command::ShowConfig = &cli.command {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    pipeline::with_workers(&cfg, || -> gisc_core::Result<()> {
        match &cli.command {
            Command::GenSpeckles => {
                for r in pipeline::gen_speckles(&cfg)? {
                    println!(
                        "{}: {} bands, fingerprint {}, mean contrast {:.4}",
                        r.kind.label(),
                        r.wavelengths_nm.len(),
                        r.calibration_fingerprint,
                        r.mean_contrast
                    );
                }
            }
            Command::Slice => {
                let m = pipeline::slice_dataset(&cfg)?;
                println!("{} slices", m.entries.len());
            }
            Command::Measure => println!("{} measurements", pipeline::measure(&cfg)?),
            Command::Reconstruct(_) => println!(
                "{} reconstructions ({})",
                pipeline::reconstruct(&cfg)?,
                cfg.recon.algorithm.label()
            ),
            Command::ExportForNet(_) => {
                let b = pipeline::export_for_net(&cfg)?;
                println!("{} bundle entries", b.entries.len());
            }
            Command::Eval => print_summary(&pipeline::eval(&cfg)?),
            Command::RunAll => print_summary(&pipeline::run_all(&cfg)?),
            Command::Render { .. } | Command::ShowConfig => unreachable!("handled above"),
        }
        Ok(())
    })?
}

fn print_summary(out: &pipeline::EvalOutput) {
    println!("{}", gisc_core::metrics::CSV_HEADER);
    for r in &out.summary {
        println!("{}", r.csv_line());
    }
}

fn exit_code(e: &GiscError) -> u8 {
    match e {
        GiscError::Config(_)
        | GiscError::InvalidParameter(_)
        | GiscError::Shape(_)
        | GiscError::Capacity(_)
        | GiscError::OutOfMemoryEffect { .. } => 2,
        GiscError::Pairing(_) => 3,
        GiscError::Numeric(_) => 4,
        GiscError::Format { .. } | GiscError::Io { .. } => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
