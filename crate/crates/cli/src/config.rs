//! Flat run configuration: a TOML file, command-line overrides on top, then
//! per-experiment defaults for anything still unset.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default seed under the `fixed` policy.
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Environment variable naming the default results directory.
pub const RESULTS_DIR_ENV: &str = "RESULTS_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SamplerSelftest,
    ExpectedCount,
    GrowthRate,
    VelocityCounts,
    Rightmost,
    Martingale,
    ManyToOne,
    RareEvent,
    Slln,
    Formulas,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::SamplerSelftest,
        Experiment::ExpectedCount,
        Experiment::GrowthRate,
        Experiment::VelocityCounts,
        Experiment::Rightmost,
        Experiment::Martingale,
        Experiment::ManyToOne,
        Experiment::RareEvent,
        Experiment::Slln,
        Experiment::Formulas,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SamplerSelftest => "sampler-selftest",
            Experiment::ExpectedCount => "expected-count",
            Experiment::GrowthRate => "growth-rate",
            Experiment::VelocityCounts => "velocity-counts",
            Experiment::Rightmost => "rightmost",
            Experiment::Martingale => "martingale",
            Experiment::ManyToOne => "many-to-one",
            Experiment::RareEvent => "rare-event",
            Experiment::Slln => "slln",
            Experiment::Formulas => "formulas",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SeedPolicy {
    /// Use `seed` (or the default seed).
    Fixed,
    /// Draw a fresh seed from the OS; the drawn value is echoed in the outputs.
    Entropy,
}

/// A scalar or a list in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

/// Everything that may appear in the config file. Unset keys take the
/// defaults of the chosen experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub beta: Option<f64>,
    /// Observation time(s).
    pub t: Option<OneOrMany>,
    pub horizon: Option<f64>,
    /// Velocity level(s).
    pub lambda: Option<OneOrMany>,
    /// Velocity whose count growth is fitted in `velocity-counts`.
    pub fit_lambda: Option<f64>,
    /// Replicates (trees, or draws for single-particle experiments).
    pub n: Option<u64>,
    /// Replicates for the rate fits of `velocity-counts`.
    pub fit_replicates: Option<u64>,
    /// Single-particle draws for `many-to-one`.
    pub spine_n: Option<u64>,
    /// Start of the rate-fit window; the end is the horizon.
    pub burn_in: Option<f64>,
    /// Spacing of the rate-fit grid.
    pub fit_step: Option<f64>,
    pub seed: Option<u64>,
    pub seed_policy: Option<SeedPolicy>,
    pub threads: Option<usize>,
    pub max_pop: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigErrors> {
        toml::from_str(text).map_err(|e| ConfigErrors(vec![ConfigError::Parse(e.to_string())]))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors(vec![ConfigError::Read(path.display().to_string(), e.to_string())]))?;
        Self::from_toml(&text)
    }

    /// Keys set in `over` replace those in `self`.
    pub fn overlay(self, over: RawConfig) -> RawConfig {
        RawConfig {
            beta: over.beta.or(self.beta),
            t: over.t.or(self.t),
            horizon: over.horizon.or(self.horizon),
            lambda: over.lambda.or(self.lambda),
            fit_lambda: over.fit_lambda.or(self.fit_lambda),
            n: over.n.or(self.n),
            fit_replicates: over.fit_replicates.or(self.fit_replicates),
            spine_n: over.spine_n.or(self.spine_n),
            burn_in: over.burn_in.or(self.burn_in),
            fit_step: over.fit_step.or(self.fit_step),
            seed: over.seed.or(self.seed),
            seed_policy: over.seed_policy.or(self.seed_policy),
            threads: over.threads.or(self.threads),
            max_pop: over.max_pop.or(self.max_pop),
            out: over.out.or(self.out),
        }
    }
}

/// Fully resolved configuration, echoed verbatim into every results directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub beta: f64,
    pub t: Vec<f64>,
    pub horizon: f64,
    pub lambda: Vec<f64>,
    pub fit_lambda: f64,
    pub n: u64,
    pub fit_replicates: u64,
    pub spine_n: u64,
    pub burn_in: f64,
    pub fit_step: f64,
    pub seed: u64,
    pub seed_policy: SeedPolicy,
    /// 0 means all available cores.
    pub threads: usize,
    pub max_pop: usize,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config is serializable")
    }

    /// Directory this run writes to.
    pub fn results_dir(&self) -> PathBuf {
        self.out.join(self.experiment.name())
    }

    /// Rate-fit grid `burn_in, burn_in + step, …, horizon`.
    pub fn fit_times(&self) -> Vec<f64> {
        let steps = ((self.horizon - self.burn_in) / self.fit_step).round() as usize;
        (0..=steps)
            .map(|k| (self.burn_in + k as f64 * self.fit_step).min(self.horizon))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Read(String, String),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// All problems found in one pass.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

struct Defaults {
    t: &'static [f64],
    horizon: f64,
    lambda: &'static [f64],
    n: u64,
}

fn defaults(exp: Experiment) -> Defaults {
    use Experiment::*;
    let d = |t, horizon, lambda, n| Defaults { t, horizon, lambda, n };
    match exp {
        SamplerSelftest => d(&[1.0], 1.0, &[], 100_000),
        ExpectedCount => d(&[1.0, 2.0, 4.0, 8.0], 8.0, &[], 10_000),
        GrowthRate => d(&[], 22.0, &[], 10),
        VelocityCounts => d(&[6.0], 22.0, &[0.3, 0.5, 1.2], 10_000),
        Rightmost => d(&[8.0, 22.0], 22.0, &[], 50),
        Martingale => d(&[2.0, 6.0, 10.0], 10.0, &[], 10_000),
        ManyToOne => d(&[6.0], 6.0, &[0.5], 10_000),
        RareEvent => d(&[4.0, 6.0, 8.0, 10.0], 10.0, &[0.8], 100_000),
        Slln => d(&[18.0], 18.0, &[], 20),
        Formulas => d(&[0.5, 1.0, 2.0, 4.0, 8.0], 8.0, &[0.0, 0.2, 0.5, 1.0, 1.5], 0),
    }
}

/// Resolve `raw` for `experiment`, collecting every problem instead of
/// stopping at the first.
pub fn validate_config(experiment: Experiment, raw: RawConfig) -> Result<RunConfig, ConfigErrors> {
    let d = defaults(experiment);
    let mut errors = Vec::new();
    let mut bad = |field: &'static str, reason: String| errors.push(ConfigError::Invalid { field, reason });

    let beta = raw.beta.unwrap_or(1.0);
    if !(beta.is_finite() && beta > 0.0) {
        bad("beta", format!("must be a finite number > 0, got {beta}"));
    }
    let t = raw.t.map(OneOrMany::into_vec).unwrap_or_else(|| d.t.to_vec());
    if let Some(x) = t.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        bad("t", format!("observation times must be finite and > 0, got {x}"));
    }
    let latest = t.iter().copied().fold(0.0, f64::max);
    let horizon = raw.horizon.unwrap_or(d.horizon.max(latest));
    if !(horizon.is_finite() && horizon > 0.0) {
        bad("horizon", format!("must be a finite number > 0, got {horizon}"));
    } else if latest > horizon {
        bad(
            "horizon",
            format!("must be at least the largest observation time {latest}, got {horizon}"),
        );
    }
    let lambda = raw.lambda.map(OneOrMany::into_vec).unwrap_or_else(|| d.lambda.to_vec());
    if let Some(x) = lambda.iter().find(|x| !x.is_finite()) {
        bad("lambda", format!("must be finite, got {x}"));
    }
    if experiment == Experiment::RareEvent && beta > 0.0 {
        if let Some(x) = lambda.iter().find(|&&x| x.is_nan() || x <= 0.5 * beta) {
            bad(
                "lambda",
                format!(
                    "rare-event needs lambda > beta/2 = {} (the decay rate -lambda^2/2 holds only there), got {x}",
                    0.5 * beta
                ),
            );
        }
        if lambda.is_empty() {
            bad("lambda", "rare-event needs one velocity".into());
        }
    }
    let fit_lambda = raw.fit_lambda.unwrap_or(0.2);
    if !fit_lambda.is_finite() {
        bad("fit_lambda", format!("must be finite, got {fit_lambda}"));
    }
    let n = raw.n.unwrap_or(d.n);
    if n == 0 && experiment != Experiment::Formulas {
        bad("n", "must be >= 1".into());
    }
    let fit_replicates = raw.fit_replicates.unwrap_or(10);
    if fit_replicates == 0 {
        bad("fit_replicates", "must be >= 1".into());
    }
    let spine_n = raw.spine_n.unwrap_or(1_000_000);
    if spine_n == 0 {
        bad("spine_n", "must be >= 1".into());
    }
    let burn_in = raw
        .burn_in
        .unwrap_or(if beta > 0.0 { 10.0 / (beta * beta) } else { 10.0 });
    let fit_step = raw.fit_step.unwrap_or(0.5);
    if !(fit_step.is_finite() && fit_step > 0.0) {
        bad("fit_step", format!("must be finite and > 0, got {fit_step}"));
    }
    let fits = matches!(experiment, Experiment::GrowthRate | Experiment::VelocityCounts);
    if fits && fit_step > 0.0 && !(burn_in >= 0.0 && burn_in + 2.0 * fit_step <= horizon) {
        bad(
            "burn_in",
            format!("fit window [{burn_in}, {horizon}] must hold at least 3 points spaced {fit_step}"),
        );
    }
    let seed_policy = raw.seed_policy.unwrap_or(SeedPolicy::Fixed);
    let seed = match (seed_policy, raw.seed) {
        (SeedPolicy::Fixed, s) => s.unwrap_or(DEFAULT_SEED),
        (SeedPolicy::Entropy, None) => rand::random(),
        (SeedPolicy::Entropy, Some(_)) => {
            bad(
                "seed",
                "an explicit seed conflicts with seed_policy = \"entropy\"".into(),
            );
            0
        }
    };
    let max_pop = raw.max_pop.unwrap_or(catalytic_bbm::engine::DEFAULT_MAX_POPULATION);
    if max_pop == 0 {
        bad("max_pop", "must be >= 1".into());
    }
    let out = raw.out.unwrap_or_else(|| {
        std::env::var_os(RESULTS_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("results"))
    });

    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    Ok(RunConfig {
        experiment,
        beta,
        t,
        horizon,
        lambda,
        fit_lambda,
        n,
        fit_replicates,
        spine_n,
        burn_in,
        fit_step,
        seed,
        seed_policy,
        threads: raw.threads.unwrap_or(0),
        max_pop,
        out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(e: &ConfigErrors) -> Vec<&'static str> {
        e.0.iter()
            .filter_map(|x| match x {
                ConfigError::Invalid { field, .. } => Some(*field),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let raw = RawConfig::from_toml("").unwrap();
        let c = validate_config(Experiment::ExpectedCount, raw).unwrap();
        assert_eq!(c.beta, 1.0);
        assert_eq!(c.t, vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.seed_policy, SeedPolicy::Fixed);
        assert_eq!(c.burn_in, 10.0);
    }

    #[test]
    fn negative_beta_is_named() {
        let raw = RawConfig::from_toml("beta = -1.0").unwrap();
        let e = validate_config(Experiment::ExpectedCount, raw).unwrap_err();
        assert!(fields(&e).contains(&"beta"));
        assert!(e.to_string().contains("beta"));
    }

    #[test]
    fn errors_are_aggregated() {
        let raw = RawConfig::from_toml("beta = 0.0\nhorizon = -2.0\nn = 0").unwrap();
        let e = validate_config(Experiment::GrowthRate, raw).unwrap_err();
        let f = fields(&e);
        assert!(
            f.contains(&"beta") && f.contains(&"horizon") && f.contains(&"n"),
            "{f:?}"
        );
    }

    #[test]
    fn rare_event_regime() {
        let raw = RawConfig::from_toml("lambda = 0.4").unwrap();
        let e = validate_config(Experiment::RareEvent, raw).unwrap_err();
        assert!(e.to_string().contains("beta/2"), "{e}");
        let ok = RawConfig::from_toml("lambda = 0.8").unwrap();
        assert!(validate_config(Experiment::RareEvent, ok).is_ok());
    }

    #[test]
    fn lists_and_scalars() {
        let raw = RawConfig::from_toml("t = [1.0, 3.0]\nlambda = 0.3").unwrap();
        let c = validate_config(Experiment::VelocityCounts, raw).unwrap();
        assert_eq!(c.t, vec![1.0, 3.0]);
        assert_eq!(c.lambda, vec![0.3]);
    }

    #[test]
    fn unknown_keys_and_bad_policy_rejected() {
        assert!(RawConfig::from_toml("betta = 1.0").is_err());
        assert!(RawConfig::from_toml("seed_policy = \"sometimes\"").is_err());
        let raw = RawConfig::from_toml("seed_policy = \"entropy\"\nseed = 3").unwrap();
        assert!(validate_config(Experiment::Slln, raw).is_err());
    }

    #[test]
    fn overrides_win() {
        let file = RawConfig::from_toml("beta = 2.0\nn = 5").unwrap();
        let cli = RawConfig {
            n: Some(7),
            ..RawConfig::default()
        };
        let c = validate_config(Experiment::Martingale, file.overlay(cli)).unwrap();
        assert_eq!((c.beta, c.n), (2.0, 7));
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let c = validate_config(Experiment::RareEvent, RawConfig::default()).unwrap();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn fit_grid_spans_window() {
        let c = validate_config(Experiment::GrowthRate, RawConfig::default()).unwrap();
        let g = c.fit_times();
        assert_eq!(g.first(), Some(&10.0));
        assert_eq!(g.last(), Some(&22.0));
        assert_eq!(g.len(), 25);
    }
}
