//! The `run` subcommand: replicated experiment and artifact output.

use std::fs;

use log::info;

use scorecal::artifacts::write_experiment;
use scorecal::experiment::run_experiment;
use scorecal::models::{Model, WellSpecified};
use scorecal::StabilizerSpec;

use crate::config::{ModelName, RunConfig};
use crate::error::{from_library, CliError};

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    match cfg.model {
        ModelName::Gaussian => dispatch(cfg.gaussian.clone(), cfg),
        ModelName::Ou1d => dispatch(cfg.ou1d.clone(), cfg),
        ModelName::Ou2d => dispatch(cfg.ou2d.clone(), cfg),
        ModelName::Custom => unreachable!("rejected by validation"),
    }
}

fn dispatch<M: Model>(model: M, cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.well_specified {
        execute(&WellSpecified(model), cfg)
    } else {
        execute(&model, cfg)
    }
}

fn execute<M: Model>(model: &M, cfg: &RunConfig) -> Result<(), CliError> {
    let exp = cfg.experiment();
    info!(
        "running {} replicates of {} (M = {}, N = {}, alpha = {:?})",
        exp.replicates,
        cfg.model.as_str(),
        exp.calibration.m,
        exp.calibration.n,
        exp.alphas
    );
    let outcome = run_experiment(model, &exp, &StabilizerSpec::Unit).map_err(|e| from_library(e, None))?;
    let manifest = cfg.manifest(&outcome.parameters);
    write_experiment(&outcome, &exp.alphas, &manifest, &cfg.out).map_err(|e| from_library(e, None))?;
    info!("artifacts written to {}", cfg.out.display());
    Ok(())
}
