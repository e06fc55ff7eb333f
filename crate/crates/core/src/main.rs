use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use irsa::cli_io::{self, ExperimentKind, Overrides};

/// Multi-class IRSA simulator and capacity-region toolkit.
#[derive(Parser)]
#[command(name = "irsa-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Throughput versus total load.
    Sweep(RunArgs),
    /// Two-class capacity region polygon.
    Region(RunArgs),
    /// Per-class average and maximum delay.
    Delay(RunArgs),
    /// Slot statistics of a k-class network against its dual.
    DualCheck(RunArgs),
    /// Asymptotic load threshold by density evolution.
    Threshold(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Output CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<(), Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("reading {}: {e}", args.config.display()))?;
    let overrides = Overrides { experiment: Some(kind), seed: args.seed, output: args.out };
    let cfg = cli_io::parse_config_with(&text, &overrides)?;
    if let Some(csv) = cli_io::run_and_write(&cfg, args.workers)? {
        print!("{csv}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
        Command::Region(a) => (ExperimentKind::Region, a),
        Command::Delay(a) => (ExperimentKind::Delay, a),
        Command::DualCheck(a) => (ExperimentKind::DualCheck, a),
        Command::Threshold(a) => (ExperimentKind::Threshold, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("irsa-sim: {e}");
            ExitCode::FAILURE
        }
    }
}
