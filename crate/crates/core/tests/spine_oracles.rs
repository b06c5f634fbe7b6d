use catalytic_bbm::analytic::{expected_population, Params};
use catalytic_bbm::engine::{count_above, run_replicate, SimConfig};
use catalytic_bbm::rng::RngStream;
use catalytic_bbm::spine::{
    many_to_one_estimate, martingale_value, rare_event_probability, single_particle_martingale_check,
};
use catalytic_bbm::stats::EstimateReport;

fn unit() -> Params {
    Params::new(1.0).unwrap()
}

#[test]
fn many_to_one_population_matches_formula() {
    let p = unit();
    let r = many_to_one_estimate(&p, 1.0, |_| 1.0, 1_000_000, &mut RngStream::new(21, 0))
        .unwrap()
        .with_target(expected_population(&p, 1.0));
    assert!(r.within(4.0), "{r:?}");
}

#[test]
fn many_to_one_matches_engine_above_a_level() {
    let (p, t, lambda) = (unit(), 6.0, 0.5);
    let level = lambda * t;
    let spine = many_to_one_estimate(
        &p,
        t,
        |x| (x > level) as u8 as f64,
        1_000_000,
        &mut RngStream::new(22, 0),
    )
    .unwrap();
    let mut cfg = SimConfig::new(p, t);
    cfg.seed = 23;
    let counts: Vec<f64> = (0..10_000)
        .map(|i| count_above(&run_replicate(&cfg, i).unwrap().snapshots[0], lambda) as f64)
        .collect();
    let engine = EstimateReport::from_samples(&counts);
    assert!(spine.combined_z(&engine) < 4.0, "{spine:?} vs {engine:?}");
}

#[test]
fn single_particle_martingale_has_unit_mean() {
    let p = unit();
    let mut errors = Vec::new();
    for (i, &t) in [1.0, 4.0, 16.0].iter().enumerate() {
        let r = single_particle_martingale_check(&p, t, 1_000_000, &mut RngStream::new(24, i as u64)).unwrap();
        assert!(r.within(4.0), "t={t}: {r:?}");
        errors.push(r.std_error);
    }
    assert!(errors[2] > errors[0]);
}

#[test]
fn additive_martingale_mean_is_one() {
    let p = unit();
    let mut cfg = SimConfig::new(p, 6.0);
    cfg.seed = 25;
    cfg.observation_times = vec![2.0, 6.0];
    let mut values = [Vec::new(), Vec::new()];
    for i in 0..10_000 {
        let rep = run_replicate(&cfg, i).unwrap();
        for (k, s) in rep.snapshots.iter().enumerate() {
            values[k].push(martingale_value(s, &p));
        }
    }
    for v in &values {
        let r = EstimateReport::from_samples(v).with_target(1.0);
        assert!(r.within(4.0), "{r:?}");
    }
}

#[test]
fn rare_event_probability_decreases() {
    let p = unit();
    let early = rare_event_probability(&p, 0.8, 4.0, 20_000, 26, 1_000_000).unwrap();
    let late = rare_event_probability(&p, 0.8, 10.0, 20_000, 26, 1_000_000).unwrap();
    assert!(early.estimate > late.estimate, "{early:?} vs {late:?}");
}
