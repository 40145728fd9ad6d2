mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Gate-racer experiment runner.
#[derive(Debug, Parser)]
#[command(name = "gate-racer", version, about)]
struct Cli {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: config out-dir, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread count (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override the config profile ("desk" or "sim").
    #[arg(long, global = true)]
    profile: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render and label a synthetic depth dataset.
    GenData,
    /// Train the neural field (stage 1: joint, stage 2: encoder fine-tune).
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
    },
    /// Evaluate a trained field against the analytic oracle.
    EvalSdf {
        /// Weight file; defaults to <out>/stage1.weights.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Run closed-loop episodes over the configured grid.
    Race {
        /// Validate the config and print the run plan without simulating.
        #[arg(long)]
        dry_run: bool,
    },
    /// Consolidate success tables from previous race runs.
    Report {
        /// Directory containing run outputs.
        dir: PathBuf,
        /// Allow pooling runs with different config fingerprints.
        #[arg(long)]
        mixed: bool,
    },
}

/// Failure classes mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad config or arguments (exit 1).
    Validation(String),
    /// Run-time failure: I/O, missing artifacts (exit 2).
    Runtime(String),
    /// A configured acceptance threshold was not met (exit 3).
    Threshold(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "validation error: {m}"),
            Self::Runtime(m) => write!(f, "runtime error: {m}"),
            Self::Threshold(m) => write!(f, "threshold not met: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Runtime(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--jobs: {e}")))?;
    }

    let mut cfg = config::ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(profile) = cli.profile {
        cfg.profile = profile;
        cfg.validate()?;
    }
    let out = cfg.out_dir(cli.out.as_deref());

    match cli.command {
        Command::GenData => commands::gen_data(&cfg, &out),
        Command::Train { stage } => commands::train(&cfg, &out, stage),
        Command::EvalSdf { weights } => {
            let weights = weights.unwrap_or_else(|| out.join("stage1.weights"));
            commands::eval_sdf(&cfg, &out, &weights)
        }
        Command::Race { dry_run } => commands::race(&cfg, &out, dry_run),
        Command::Report { dir, mixed } => commands::report(&dir, mixed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            match e {
                CliError::Validation(_) => ExitCode::from(1),
                CliError::Runtime(_) => ExitCode::from(2),
                CliError::Threshold(_) => ExitCode::from(3),
            }
        }
    }
}
