use std::path::PathBuf;
use std::process::ExitCode;

use beacon_cli::{run_manifest, Pipeline, RunManifest};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "beacon", version, about = "Beaconing performance on a one-dimensional road")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pipeline on a scenario file.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    pipeline: Pipeline,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Contention windows, comma separated.
    #[arg(long, value_delimiter = ',')]
    wss: Option<Vec<u32>>,
    /// Arrival rates (cars/min) replacing the scenario's, comma separated.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long, default_value_t = 0.2)]
    overhead: f64,
    #[arg(long, value_parser = ["linear", "capture"])]
    interference: Option<String>,
    #[arg(long, value_parser = ["exact", "approx"])]
    tau: Option<String>,
    /// Coefficients written by `--pipeline calibrate`, for `--tau approx`.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Compare results with the reference bands; exit 3 if any fails.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let Command::Run(a) = Cli::parse().command;
    let m = RunManifest {
        scenario: a.scenario,
        pipeline: a.pipeline,
        out: a.out,
        seed: a.seed,
        trials: a.trials,
        wss: a.wss,
        rates: a.rates,
        tau: a.tau,
        interference: a.interference,
        overhead: a.overhead,
        calibration: a.calibration,
        check: a.check,
    };
    match run_manifest(&m) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for s in &outcome.summary {
                println!("{s}");
            }
            for c in &outcome.checks {
                println!("{c}");
            }
            for p in &outcome.artifacts {
                println!("wrote {}", p.display());
            }
            ExitCode::from(outcome.status() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.status as u8)
        }
    }
}
