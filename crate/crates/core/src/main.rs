use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use hsi_causal::pipeline::{
    run_discover, run_ingest, run_pipeline, run_predict, run_simulate, run_subsample,
    PipelineConfig, Scenario,
};

#[derive(Parser)]
#[command(
    name = "hsi-causal",
    version,
    about = "Causal discovery and causally-informed forecasting of human spatial interaction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON pipeline config; defaults to the builtin human-goal simulation.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for simulation and permutation tests.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate tracks, features and the ground-truth graph.
    Simulate,
    /// Load a recorded dataset and extract features.
    Ingest,
    /// Run PCMCI on the extracted features.
    Discover,
    /// Benchmark causal against full GP predictors.
    Predict,
    /// Run every stage and write a manifest.
    Pipeline,
}

fn run(cli: &Cli) -> hsi_causal::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::synthetic(Scenario::HumanGoal),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Simulate => run_simulate(&cfg, &out).map(drop),
        Command::Ingest => run_ingest(&cfg, &out).map(drop),
        Command::Discover => {
            if cfg.subsample.is_some() {
                run_subsample(&cfg, &out)?;
            }
            run_discover(&cfg, &out).map(drop)
        }
        Command::Predict => run_predict(&cfg, &out).map(drop),
        Command::Pipeline => run_pipeline(&cfg, &out).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
