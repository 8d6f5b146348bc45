use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pacroute::cli::{run, Command, Options};

#[derive(Parser)]
#[command(
    name = "pacroute",
    version,
    about = "Calibrate, audit and stress-test threshold routers"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Run config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the sampling seed and the Monte-Carlo master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replications; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Per-replication CSV trace (audit only).
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Sample a calibration set and select a threshold.
    Calibrate,
    /// Estimate fast-routing probabilities on an audit grid.
    Audit,
    /// Run the relabelling attack at x* and report the verdicts.
    Demo,
    /// Exact probabilities by enumerating calibration sets.
    Oracle,
    /// Check the world named by the config.
    ValidateWorld,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let cmd = match cli.command {
        Cmd::Calibrate => Command::Calibrate,
        Cmd::Audit => Command::Audit,
        Cmd::Demo => Command::Demo,
        Cmd::Oracle => Command::Oracle,
        Cmd::ValidateWorld => Command::ValidateWorld,
    };
    let opts = Options {
        config,
        out: cli.out,
        seed: cli.seed,
        workers: cli.workers,
        trace: cli.trace,
    };
    match run(cmd, &opts) {
        Ok(outcome) => {
            if opts.out.is_none() {
                print!("{}", outcome.report);
            }
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
