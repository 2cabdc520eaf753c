use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use phase_bench::stages::{self, Layout, Variant};
use phase_bench::{BenchError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "phase-bench", version, about = "Defocus phase retrieval experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the spectrally flattened training variant.
    #[arg(long, global = true)]
    premodulate: bool,
    /// Filter applied to calibrated network outputs before the sweep.
    #[arg(long, global = true, value_enum)]
    post_filter: Option<PostFilter>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PostFilter {
    Flatten,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Generate train, test and calibration corpora.
    Synth,
    /// Corpus power spectra before and after flattening.
    Psd,
    /// Simulate measurement pairs.
    Pairs,
    /// Train a network on the simulated pairs.
    Train,
    /// Fit the affine output correction and score the test split.
    Calibrate,
    /// Two-point resolution sweep.
    Resolve,
    /// Run every stage and write the full report.
    Reproduce,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if cli.premodulate {
        cfg.premodulate = true;
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), BenchError> {
    let layout = Layout::new(&cfg.output_dir);
    let variant = Variant::from_flag(cfg.premodulate);
    if !matches!(cli.command, Command::Reproduce) {
        stages::prepare(cfg, &layout)?;
    }
    match cli.command {
        Command::Synth => drop(stages::synth(cfg, &layout)?),
        Command::Psd => drop(stages::psd(cfg, &layout)?),
        Command::Pairs => drop(stages::pairs(cfg, &layout, variant)?),
        Command::Train => drop(stages::train_stage(cfg, &layout, variant)?),
        Command::Calibrate => drop(stages::calibrate_stage(cfg, &layout, variant)?),
        Command::Resolve => drop(stages::resolve_stage(cfg, &layout, variant, cli.post_filter.is_some())?),
        Command::Reproduce => {
            let report = stages::reproduce(cfg, &layout)?;
            for r in &report.resolution {
                println!("{}", r.summary());
            }
            return Ok(());
        }
    }
    stages::write_index(cfg, &layout)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = run(&cli, &cfg).with_context(|| format!("writing to {}", cfg.output_dir.display()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e.downcast_ref::<BenchError>().is_some_and(BenchError::is_validation);
            ExitCode::from(if validation { 1 } else { 2 })
        }
    }
}
