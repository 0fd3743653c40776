//! `cftrack`: train, track, and evaluate correlation filters from the
//! command line.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "cftrack",
    about = "Correlation-filter visual tracker and evaluation harness",
    version
)]
struct Cli {
    /// Configuration file (sectioned key = value text).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides run.out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed (overrides run.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write per-iteration solver traces.
    #[arg(long, global = true)]
    trace: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-pass evaluation on a sequence; writes boxes.csv, decisions.csv,
    /// metrics.json and curves.csv.
    Track {
        /// Sequence directory (overrides run.sequence).
        #[arg(long)]
        sequence: Option<PathBuf>,
    },
    /// Materialize a synthetic sequence in the loader's on-disk format.
    Synth,
    /// Run the randomized oracle suites and report pass/fail per suite.
    Selftest,
    /// Time filter training and detection over the configured sizes.
    Bench,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            RunConfig::parse(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.trace {
        cfg.trace = true;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Track { sequence } => {
            if let Some(seq) = sequence {
                cfg.sequence = Some(seq.clone());
            }
            commands::cmd_track(&cfg)
        }
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Selftest => commands::cmd_selftest(&cfg),
        Command::Bench => commands::cmd_bench(&cfg),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.code());
    }
}
