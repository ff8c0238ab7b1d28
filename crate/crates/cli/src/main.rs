//! Experiment runner: synthesize delayed-system measurement data, estimate
//! kernels over a sweep of mixture orders, and run the validation suite.

mod commands;
mod config;
mod presets;
mod report;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "delayid",
    about = "Distributed-delay identification via mixed-Erlang kernels and the linear chain trick",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic measurements from the configured true kernel
    Generate(RunArgs),
    /// Estimate kernels from generated data over the configured orders
    Estimate {
        #[command(flatten)]
        args: RunArgs,
        /// Directory holding measurements.csv (and optionally truth.json)
        #[arg(long)]
        data: PathBuf,
    },
    /// Generate data and estimate in one run (data lands in <out>/data)
    Sweep(RunArgs),
    /// Run the numerical validation suite and write validation.json
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (JSON); overrides --preset
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset used when no config file is given
    #[arg(long, default_value = "logistic-distributed-desk")]
    preset: String,
    /// Use the paper-scale variant of the chosen preset
    #[arg(long)]
    paper_scale: bool,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed override for noise injection
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
                ExperimentConfig::from_json(&text)
            }
            None => {
                let name = if self.paper_scale {
                    presets::paper_scale_name(&self.preset)
                } else {
                    self.preset.clone()
                };
                presets::by_name(&name)
            }
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => {
            let config = args.load()?;
            commands::generate(&config, &args.out, args.seed)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate { args, data } => {
            let config = args.load()?;
            commands::estimate(&config, &data, &args.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(args) => {
            let config = args.load()?;
            commands::sweep(&config, &args.out, args.seed)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate(args) => {
            let config = args.load()?;
            if validate::run(&config, &args.out)? {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(2))
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
