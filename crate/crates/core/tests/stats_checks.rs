use catalytic_bbm::analytic::{expected_population, Params};
use catalytic_bbm::engine::{run_replicate, SimConfig};
use catalytic_bbm::rng::RngStream;
use catalytic_bbm::special::norm_cdf;
use catalytic_bbm::stats::{empirical_scaled_sum, empirical_slln_ratio, ks_statistic, EstimateReport};

#[test]
fn ks_accepts_draws_from_the_reference_law() {
    let mut rng = RngStream::new(31, 0);
    let xs: Vec<f64> = (0..100_000).map(|_| rng.standard_normal()).collect();
    assert!(ks_statistic(&xs, norm_cdf).unwrap().passes());
    let us: Vec<f64> = (0..100_000).map(|_| rng.uniform()).collect();
    assert!(ks_statistic(&us, |u| u.clamp(0.0, 1.0)).unwrap().passes());
}

#[test]
fn right_half_fraction_is_one_half() {
    let mut cfg = SimConfig::new(Params::new(1.0).unwrap(), 6.0);
    cfg.seed = 32;
    let fractions: Vec<f64> = (0..1000)
        .map(|i| {
            let rep = run_replicate(&cfg, i).unwrap();
            empirical_slln_ratio(&rep.snapshots[0], |x| (x >= 0.0) as u8 as f64).unwrap()
        })
        .collect();
    let r = EstimateReport::from_samples(&fractions).with_target(0.5);
    assert!(r.within(4.0), "{r:?}");
}

#[test]
fn scaled_population_mean_matches_formula() {
    let p = Params::new(1.0).unwrap();
    for &t in &[6.0, 10.0] {
        let mut cfg = SimConfig::new(p, t);
        cfg.seed = 33;
        let sums: Vec<f64> = (0..4000)
            .map(|i| empirical_scaled_sum(&run_replicate(&cfg, i).unwrap().snapshots[0], &p, |_| 1.0))
            .collect();
        let target = expected_population(&p, t) * (-0.5 * t).exp();
        let r = EstimateReport::from_samples(&sums).with_target(target);
        assert!(r.within(4.0), "t={t}: {r:?}");
    }
}
