//! Single-particle estimators.
//!
//! Because splits are driven by local time at the origin, the expected sum of
//! `f` over the population at `t` equals `E[f(X_t) e^{βL_t}]` for one Brownian
//! particle. These estimators need no tree and serve as an oracle for the
//! engine.

use rayon::prelude::*;

use crate::analytic::Params;
use crate::engine::{count_above, run_replicate, SimConfig, Snapshot};
use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::sampler::sample_position_and_localtime;
use crate::stats::{EstimateReport, MeanAccumulator};

/// Fewer hits than this and [`rare_event_probability`] refuses to report.
pub const MIN_RARE_HITS: u64 = 10;

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("must be finite and > 0, got {t}")));
    }
    Ok(())
}

/// Mean and SE of `f(x)·e^{βl}` over `n` exact draws of `(X_t, L_t)`.
pub fn many_to_one_estimate<F: Fn(f64) -> f64>(
    params: &Params,
    t: f64,
    f: F,
    n: u64,
    rng: &mut RngStream,
) -> Result<EstimateReport> {
    check_time(t)?;
    let mut acc = MeanAccumulator::default();
    for _ in 0..n {
        let d = sample_position_and_localtime(t, rng);
        acc.push(f(d.x) * (params.beta * d.l).exp());
    }
    Ok(acc.report())
}

/// Additive martingale `Σ_u exp(−β|X_t^u| − β²t/2)`.
pub fn martingale_value(snapshot: &Snapshot, params: &Params) -> f64 {
    let b = params.beta;
    let drift = 0.5 * b * b * snapshot.t;
    snapshot.positions().map(|x| (-b * x.abs() - drift).exp()).sum()
}

/// Mean of `exp(−β|x| + βl − β²t/2)` over `n` draws; its expectation is 1.
pub fn single_particle_martingale_check(
    params: &Params,
    t: f64,
    n: u64,
    rng: &mut RngStream,
) -> Result<EstimateReport> {
    check_time(t)?;
    let b = params.beta;
    let drift = 0.5 * b * b * t;
    let mut acc = MeanAccumulator::default();
    for _ in 0..n {
        let d = sample_position_and_localtime(t, rng);
        acc.push((b * (d.l - d.x.abs()) - drift).exp());
    }
    Ok(acc.report().with_target(1.0))
}

fn check_rare_regime(params: &Params, lambda: f64) -> Result<()> {
    if !(lambda > 0.5 * params.beta) {
        return Err(invalid(
            "lambda",
            format!(
                "rare-event regime needs lambda > beta/2 = {}, got {lambda}",
                0.5 * params.beta
            ),
        ));
    }
    Ok(())
}

fn binomial_report(hits: u64, n: u64) -> Result<EstimateReport> {
    if hits < MIN_RARE_HITS {
        return Err(Error::InsufficientHits {
            hits,
            n,
            required: MIN_RARE_HITS,
        });
    }
    let p = hits as f64 / n as f64;
    Ok(EstimateReport {
        estimate: p,
        std_error: (p * (1.0 - p) / n as f64).sqrt(),
        n,
        target: None,
        z: None,
    })
}

/// Direct Monte Carlo estimate of `P(|N_t^{λt}| ≥ 1)` over `n` engine replicates.
pub fn rare_event_probability(
    params: &Params,
    lambda: f64,
    t: f64,
    n: u64,
    seed: u64,
    max_population: usize,
) -> Result<EstimateReport> {
    rare_event_curve(params, lambda, &[t], n, seed, max_population)?
        .pop()
        .expect("one time requested")
}

/// [`rare_event_probability`] at several times, reusing each replicate's tree
/// across all of them. Each entry fails on its own if it has too few hits.
pub fn rare_event_curve(
    params: &Params,
    lambda: f64,
    times: &[f64],
    n: u64,
    seed: u64,
    max_population: usize,
) -> Result<Vec<Result<EstimateReport>>> {
    let hits = rare_event_hits(params, lambda, times, n, seed, max_population)?;
    Ok(hits_to_reports(&hits, times.len()))
}

/// Binomial estimate per time from per-replicate indicators.
pub fn hits_to_reports(hits: &[Vec<bool>], times: usize) -> Vec<Result<EstimateReport>> {
    let n = hits.len() as u64;
    (0..times)
        .map(|k| binomial_report(hits.iter().filter(|r| r[k]).count() as u64, n))
        .collect()
}

/// Per replicate, whether some particle lies above `λt` at each of `times`.
/// Replicate `i` uses the streams of index `i`, so results do not depend on
/// how the work is scheduled.
pub fn rare_event_hits(
    params: &Params,
    lambda: f64,
    times: &[f64],
    n: u64,
    seed: u64,
    max_population: usize,
) -> Result<Vec<Vec<bool>>> {
    check_rare_regime(params, lambda)?;
    for &t in times {
        check_time(t)?;
    }
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let mut config = SimConfig::new(*params, horizon);
    config.observation_times = times.to_vec();
    config.max_population = max_population;
    config.seed = seed;
    config.replicates = n;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let rep = run_replicate(&config, i)?;
            Ok(rep.snapshots.iter().map(|s| count_above(s, lambda) >= 1).collect())
        })
        .collect()
}
