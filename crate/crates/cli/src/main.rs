#![allow(clippy::neg_cmp_op_on_partial_ord)]
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod synth;

use config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing {artifact} in {dir}; run `exrain {command}` first")]
    Missing {
        artifact: String,
        dir: PathBuf,
        command: &'static str,
    },
    #[error(transparent)]
    Core(#[from] exrain::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(exrain::Error::NonConvergence { .. }) => 4,
            CliError::Missing { .. } | CliError::Core(_) => 3,
        }
    }
}

/// Stochastic generator for extreme rainfall episodes.
#[derive(Debug, Parser)]
#[command(name = "exrain", version)]
struct Cli {
    /// TOML configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override a configuration key, e.g. `--set episodes.q=0.9`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the default configuration.
    InitConfig,
    /// Write a synthetic gauge and radar dataset into the output directory.
    GenerateSynthetic,
    /// Fit the zero-inflated EGPD marginal.
    FitMargins,
    /// Select extreme episodes and write the trade-off tables.
    SelectEpisodes,
    /// Estimate empirical advection per episode.
    EstimateAdvection,
    /// Fit the space-time variogram by composite likelihood.
    FitVariogram,
    /// Simulate rainfall episodes on a grid.
    Simulate,
    /// Write diagnostic tables.
    Diagnose,
    /// Simulate-and-refit parameter recovery runs.
    ValidateRecovery,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let (text, base) = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let base = p.parent().map(PathBuf::from).unwrap_or_default();
            (text, base)
        }
        None => (String::new(), std::env::current_dir()?),
    };
    let mut cfg = PipelineConfig::parse(&text, &cli.overrides, &base)?;
    if let Some(o) = &cli.output {
        cfg.output = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let cfg = load_config(cli)?;
    match cli.command {
        Command::InitConfig => {
            print!("{}", PipelineConfig::default().to_toml());
            Ok(())
        }
        Command::GenerateSynthetic => commands::generate_synthetic(&cfg),
        Command::FitMargins => commands::fit_margins(&cfg),
        Command::SelectEpisodes => commands::select_episodes(&cfg),
        Command::EstimateAdvection => commands::estimate_advection(&cfg),
        Command::FitVariogram => commands::fit_variogram(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Diagnose => commands::diagnose(&cfg),
        Command::ValidateRecovery => commands::validate_recovery(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
