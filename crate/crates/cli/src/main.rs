use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use catalytic_bbm_cli::config::{validate_config, ConfigErrors, Experiment, OneOrMany, RawConfig, SeedPolicy};
use catalytic_bbm_cli::{execute, RunError};

/// Run one numerical experiment on catalytic branching Brownian motion and
/// write its results under `<out>/<experiment>/`.
#[derive(Debug, Parser)]
#[command(name = "catalytic-bbm", version = catalytic_bbm_cli::output::VERSION, allow_negative_numbers = true)]
struct Cli {
    experiment: Experiment,
    /// TOML file with any of the keys below; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    /// Observation time(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Velocity level(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    #[arg(long)]
    fit_lambda: Option<f64>,
    /// Replicates.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    fit_replicates: Option<u64>,
    #[arg(long)]
    spine_n: Option<u64>,
    #[arg(long)]
    burn_in: Option<f64>,
    #[arg(long)]
    fit_step: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    seed_policy: Option<SeedPolicy>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Population cap per tree.
    #[arg(long)]
    max_pop: Option<usize>,
    /// Results root; defaults to $RESULTS_DIR or ./results.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cli {
    fn overrides(&self) -> RawConfig {
        RawConfig {
            beta: self.beta,
            t: self.t.clone().map(OneOrMany::Many),
            horizon: self.horizon,
            lambda: self.lambda.clone().map(OneOrMany::Many),
            fit_lambda: self.fit_lambda,
            n: self.n,
            fit_replicates: self.fit_replicates,
            spine_n: self.spine_n,
            burn_in: self.burn_in,
            fit_step: self.fit_step,
            seed: self.seed,
            seed_policy: self.seed_policy,
            threads: self.threads,
            max_pop: self.max_pop,
            out: self.out.clone(),
        }
    }
}

fn resolve(cli: &Cli) -> Result<catalytic_bbm_cli::config::RunConfig, ConfigErrors> {
    let base = match &cli.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    validate_config(cli.experiment, base.overlay(cli.overrides()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(2);
        }
    };
    match execute(&cfg) {
        Ok((outcome, dir)) => {
            println!("{}: {}", cfg.experiment, outcome.claim);
            println!("seed {}\n", cfg.seed);
            print!("{}", outcome.text);
            println!("\nresults in {}", dir.display());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(RunError::Config(e)) => {
            eprint!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
