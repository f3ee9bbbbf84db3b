use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use radelft::commands::{self, DetectCfarArgs, DetectNnArgs, EvaluateArgs, ExportArgs, ExportFormat, IngestArgs, RunArgs, SimulateArgs, TrainArgs};

/// Simulated 4D radar occupancy: simulation, processing, CFAR and learned
/// detection, evaluation and export.
#[derive(Debug, Parser)]
#[command(name = "radelft", version)]
struct Cli {
    /// JSON configuration; defaults to the run directory's config.json, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize ADC frames and ground-truth clouds for a scene.
    Simulate {
        /// Scene JSON; a seeded random scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Random-scene seed, or noise seed override for a scene file.
        #[arg(long)]
        seed: Option<u64>,
        /// New run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn ADC frames into radar cubes.
    Process(Run),
    /// Cascaded OS-CFAR occupancy.
    DetectCfar {
        #[command(flatten)]
        run: Run,
        /// Only no_elevation applies here.
        #[arg(long = "ablation")]
        ablations: Vec<String>,
    },
    /// Train the learned detector on processed runs.
    Train {
        /// Run directories with cubes and ground truth.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Run directories for the per-epoch validation loss.
        #[arg(long = "val")]
        validation: Vec<PathBuf>,
        /// Overrides the configured initialization and shuffling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// no_doppler, quantile, no_time or no_elevation; repeatable.
        #[arg(long = "ablation")]
        ablations: Vec<String>,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Learned-detector occupancy from a checkpoint.
    DetectNn {
        #[command(flatten)]
        run: Run,
        /// Checkpoint written by train.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Probability threshold; the checkpoint's when omitted.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Pd, Pfa, Chamfer distance and bird's-eye-view images.
    Evaluate {
        #[command(flatten)]
        run: Run,
        /// Prediction sets to score (cfar, nn); all when omitted.
        #[arg(long = "pred")]
        predictions: Vec<String>,
    },
    /// Build a run directory from existing cube and ground-truth sidecars.
    Ingest {
        /// Cube sidecar; repeatable.
        #[arg(long = "cube", required = true)]
        cubes: Vec<PathBuf>,
        /// Point-cloud sidecar paired with the nearest cube in time; repeatable.
        #[arg(long = "gt")]
        ground_truth: Vec<PathBuf>,
        /// New run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an occupancy or point-cloud artifact as PLY or CSV.
    Export {
        /// Occupancy or point-cloud sidecar.
        input: PathBuf,
        /// Cube adding Doppler and power to occupancy exports.
        #[arg(long)]
        cube: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Ply)]
        format: Format,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
struct Run {
    /// Run directory holding manifest.json.
    input: PathBuf,
    /// Output directory; the input directory when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Ply,
    Csv,
}

fn run_args(run: Run, config: &Option<PathBuf>) -> RunArgs {
    RunArgs { input: run.input, config: config.clone(), out: run.out }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("RADELFT_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("RADELFT_THREADS={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let config = cli.config;
    match cli.command {
        Command::Simulate { scene, seed, out } => {
            let m = commands::simulate(&SimulateArgs { config, scene, seed, out: out.clone() })?;
            println!("{} frames -> {}", m.frames.len(), out.display());
        }
        Command::Process(r) => {
            let m = commands::process(&run_args(r, &config))?;
            println!("{} cubes", m.frames.len());
        }
        Command::DetectCfar { run, ablations } => {
            let m = commands::detect_cfar(&DetectCfarArgs { run: run_args(run, &config), ablations })?;
            println!("{} cfar grids", m.frames.len());
        }
        Command::Train { inputs, validation, seed, ablations, out } => {
            let (_, log) = commands::train(&TrainArgs { inputs, validation, config, seed, ablations, out: out.clone() })?;
            let last = log.epoch_train_loss.last().copied().unwrap_or(f64::NAN);
            println!("{} steps, final train loss {last:.6} -> {}", log.steps, out.display());
        }
        Command::DetectNn { run, checkpoint, threshold } => {
            let m = commands::detect_nn(&DetectNnArgs { run: run_args(run, &config), checkpoint, threshold })?;
            println!("{} nn grids", m.frames.len());
        }
        Command::Evaluate { run, predictions } => {
            let report = commands::evaluate(&EvaluateArgs { run: run_args(run, &config), predictions })?;
            for (name, p) in &report.predictions {
                let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
                println!(
                    "{name}: pd {} pfa {} chamfer {} m",
                    fmt(p.summary.pd),
                    fmt(p.summary.pfa),
                    fmt(p.summary.chamfer_m)
                );
            }
        }
        Command::Ingest { cubes, ground_truth, out } => {
            let m = commands::ingest(&IngestArgs { cubes, ground_truth, config, out: out.clone() })?;
            println!("{} frames -> {}", m.frames.len(), out.display());
        }
        Command::Export { input, cube, format, out } => {
            let format = match format {
                Format::Ply => ExportFormat::Ply,
                Format::Csv => ExportFormat::Csv,
            };
            let n = commands::export(&ExportArgs { input, cube, format, out: out.clone() })?;
            println!("{n} points -> {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
