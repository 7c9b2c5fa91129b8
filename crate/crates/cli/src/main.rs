//! `calibrate`: replicated score-calibration experiments and coverage
//! diagnostics from the command line.

mod config;
mod diagnose;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "calibrate", version, about = "Bayesian score calibration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a replicated calibration experiment and write its artifacts.
    Run(Overrides),
    /// Print the resolved configuration as TOML.
    Config(Overrides),
    /// Report calibration coverage for saved results.
    Diagnose {
        /// Result directory, replicate_<k>.json or diagnostics CSV.
        path: PathBuf,
        /// Coverage CSV destination; defaults to diagnose_coverage.csv next
        /// to the inputs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(flags) => {
            let cfg = RunConfig::resolve(&flags)?;
            run::run(&cfg)?;
            println!("wrote {}", cfg.out.display());
            Ok(())
        }
        Command::Config(flags) => {
            print!("{}", RunConfig::resolve(&flags)?.to_toml());
            Ok(())
        }
        Command::Diagnose { path, out } => {
            print!("{}", diagnose::diagnose(&path, out.as_deref())?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CAL_LOG", "warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
