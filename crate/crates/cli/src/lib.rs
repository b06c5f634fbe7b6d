//! Command-line experiments for the catalytic branching Brownian motion
//! simulator. Each experiment checks one claim numerically and writes its
//! evidence to a results directory.

pub mod config;
pub mod experiments;
pub mod oracles;
pub mod output;

use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

use config::{ConfigErrors, RunConfig};
use output::Outcome;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error("simulation failed: {0}")]
    Sim(#[from] catalytic_bbm::Error),
    #[error("cannot write results: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot start thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Run one experiment on a pool of `cfg.threads` workers (all cores when 0)
/// and write its results. Returns the outcome and the results directory.
pub fn execute(cfg: &RunConfig) -> Result<(Outcome, PathBuf), RunError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build()?;
    let threads = pool.current_num_threads();
    let start = Instant::now();
    let outcome = pool.install(|| experiments::run_experiment(cfg))?;
    let wall = start.elapsed().as_secs_f64();
    let dir = output::write_results(cfg, &outcome, threads, wall)?;
    Ok((outcome, dir))
}
