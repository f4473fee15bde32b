//! `sampled-iss`: run simulations, envelope estimates, campaigns, Euler
//! studies and the weak-ISS construction from JSON configs.
//!
//! Exit codes: 0 success, 1 assertion failure, 2 config error, 3 numerical
//! failure (including blow-up).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Failure, Output};
use config::{parse_partition, ExperimentConfig, Overrides};
use sampled_iss::types::PartitionKind;

#[derive(Parser, Debug)]
#[command(name = "sampled-iss", version, about = "Sampled-data ISS experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// `uniform:STEP` or `jitter:STEP:FRACTION:SEED`.
    #[arg(long, global = true, value_parser = parse_partition)]
    partition: Option<PartitionKind>,

    #[arg(long, global = true)]
    horizon: Option<f64>,

    #[arg(long, global = true)]
    substeps: Option<usize>,

    #[arg(long, global = true)]
    escape_radius: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// One sampling solution: trajectory.csv and run.json.
    Simulate,
    /// Comparison tables and the ISS envelope: tables.csv and envelope.json.
    Envelope,
    /// A verification campaign over admissible cases: report.json.
    Campaign,
    /// A refinement study: euler.json and limit.csv.
    Euler,
    /// The weak-ISS certificate and a bounded-input campaign.
    Weakiss,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg =
        ExperimentConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        partition: cli.partition,
        horizon: cli.horizon,
        substeps: cli.substeps,
        escape_radius: cli.escape_radius,
    });
    Ok(cfg)
}

fn run(cli: &Cli) -> commands::Outcome {
    let cfg = load(cli)?;
    let out = Output::new(&cli.out)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Envelope => commands::envelope(&cfg, &out),
        Command::Campaign => commands::campaign(&cfg, &out),
        Command::Euler => commands::euler(&cfg, &out),
        Command::Weakiss => commands::weakiss(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
