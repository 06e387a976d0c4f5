//! `ibrtwin` — the end-to-end pipeline driver.
//!
//! One binary, four subcommands, each reading a JSON config and writing its
//! artifacts under `--out`:
//!
//! * `simulate` — run one scenario or a randomized suite, one CSV per
//!   scenario plus a manifest;
//! * `fit` — identify a surrogate model from training CSVs and persist it
//!   with a fit report;
//! * `validate` — replay a fitted model over held-out scenarios under a
//!   chosen feedback mode, writing per-scenario prediction CSVs and an
//!   aggregate error report;
//! * `monitor` — feed a measurement stream (possibly with output dropouts)
//!   through the continual-validation loop, logging events as JSON lines and
//!   persisting every model version.
//!
//! Every artifact embeds the seed and the SHA-256 hash of the effective
//! configuration that produced it, so a finished output directory is
//! self-describing: re-running the same command with the same config
//! reproduces every artifact bit-for-bit. The run's only wall-clock value
//! is the manifest's dedicated `created_utc` metadata field.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 when the
//! command completed but left a warning behind (a non-converged fit, a
//! failed recalibration attempt, or skipped stream samples).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ibrtwin_core::FeedbackMode;

mod artifacts;
mod cmd_fit;
mod cmd_monitor;
mod cmd_simulate;
mod cmd_validate;
mod config;

/// How a successfully completed command ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Everything went through; exit code 0.
    Clean,
    /// The command finished and wrote its artifacts, but something deserves
    /// attention (e.g. a fit that kept its best iterate without converging);
    /// exit code 2.
    Warnings,
}

#[derive(Parser)]
#[command(name = "ibrtwin")]
#[command(about = "Surrogate-model pipeline: simulate, fit, validate, monitor")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario (or a randomized suite) to CSV datasets
    Simulate(SimulateArgs),
    /// Fit a surrogate model from training CSVs
    Fit(FitArgs),
    /// Validate a fitted model on held-out scenario CSVs
    Validate(ValidateArgs),
    /// Run the continual-validation monitor over a measurement stream
    Monitor(MonitorArgs),
}

#[derive(clap::Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; receives the scenario CSVs and manifest.json
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing output files
    #[arg(long, default_value_t = false)]
    force: bool,
}

#[derive(clap::Args)]
pub struct FitArgs {
    /// Fit config (JSON): training CSVs, channel roles, model orders
    #[arg(long)]
    config: PathBuf,
    /// Output directory; receives model.json, fit_report.json, manifest.json
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed (recorded in the model's provenance)
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing output files
    #[arg(long, default_value_t = false)]
    force: bool,
}

#[derive(clap::Args)]
pub struct ValidateArgs {
    /// Validation config (JSON): model file, dataset CSVs, channel roles
    #[arg(long)]
    config: PathBuf,
    /// Output directory; receives prediction CSVs, the error report, and
    /// box-plot data
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed (recorded in artifact provenance)
    #[arg(long)]
    seed: Option<u64>,
    /// Output feedback mode for the predictor
    #[arg(long, default_value = "measured", value_parser = parse_mode)]
    mode: FeedbackMode,
    /// Overwrite existing output files
    #[arg(long, default_value_t = false)]
    force: bool,
}

#[derive(clap::Args)]
pub struct MonitorArgs {
    /// Monitor config (JSON): model file, stream CSV, loop tuning
    #[arg(long)]
    config: PathBuf,
    /// Output directory; receives events.jsonl, model versions, manifest.json
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed (recorded in artifact provenance)
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing output files
    #[arg(long, default_value_t = false)]
    force: bool,
}

/// Parses `measured`, `freerun`, or `measured-until:<k>`.
fn parse_mode(s: &str) -> Result<FeedbackMode, String> {
    match s {
        "measured" => Ok(FeedbackMode::Measured),
        "freerun" => Ok(FeedbackMode::FreeRun),
        other => {
            let cut = other.strip_prefix("measured-until:").ok_or_else(|| {
                format!("expected `measured`, `freerun`, or `measured-until:<k>`, got `{other}`")
            })?;
            cut.parse::<usize>()
                .map(FeedbackMode::MeasuredUntil)
                .map_err(|e| format!("bad cutoff in `{other}`: {e}"))
        }
    }
}

fn run(command: Command) -> anyhow::Result<Outcome> {
    match command {
        Command::Simulate(args) => cmd_simulate::run(&args),
        Command::Fit(args) => cmd_fit::run(&args),
        Command::Validate(args) => cmd_validate::run(&args),
        Command::Monitor(args) => cmd_monitor::run(&args),
    }
}

fn main() -> ExitCode {
    // clap's default exit code for usage errors is 2, which this tool
    // reserves for completed-with-warnings; remap bad invocations to 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Warnings) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
