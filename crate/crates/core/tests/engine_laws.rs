use catalytic_bbm::analytic::{expected_count_above, expected_population, Params};
use catalytic_bbm::engine::{
    count_above, grow_genealogy, grow_genealogy_ordered, population_curve, run_replicate, tree_stream, ChildOrder,
    SimConfig,
};
use catalytic_bbm::quadrature::Quadrature;
use catalytic_bbm::special::norm_cdf;
use catalytic_bbm::stats::{EstimateReport, MeanAccumulator};

fn config(beta: f64, horizon: f64, seed: u64) -> SimConfig {
    let mut c = SimConfig::new(Params::new(beta).unwrap(), horizon);
    c.seed = seed;
    c
}

#[test]
fn mean_population_matches_formula() {
    let cfg = config(1.0, 4.0, 11);
    let counts: Vec<f64> = (0..10_000)
        .map(|i| {
            let tree = grow_genealogy(&cfg, &mut tree_stream(cfg.seed, i)).unwrap();
            population_curve(&tree, &[4.0]).unwrap()[0] as f64
        })
        .collect();
    let target = expected_population(&cfg.params, 4.0);
    let r = EstimateReport::from_samples(&counts).with_target(target);
    assert!(r.within(4.0), "{r:?}");
}

#[test]
fn no_branch_probability_matches_quadrature() {
    let (beta, t) = (1.0, 1.0);
    let cfg = config(beta, t, 12);
    // P(τ_e > t) = P(L_t < e) = 2Φ(e/√t) − 1, averaged over e ~ Exp(β)
    let target = Quadrature::default()
        .integrate(
            |e: f64| beta * (-beta * e).exp() * (2.0 * norm_cdf(e / t.sqrt()) - 1.0),
            0.0,
            f64::INFINITY,
        )
        .unwrap()
        .value;
    let hits: Vec<f64> = (0..100_000)
        .map(|i| {
            let tree = grow_genealogy(&cfg, &mut tree_stream(cfg.seed, i)).unwrap();
            (tree.len() == 1) as u8 as f64
        })
        .collect();
    let r = EstimateReport::from_samples(&hits).with_target(target);
    assert!(r.within(4.0), "{r:?}");
}

#[test]
fn positions_are_symmetric() {
    let cfg = config(1.0, 6.0, 13);
    let mut mean = MeanAccumulator::default();
    let mut sign = MeanAccumulator::default();
    for i in 0..1000 {
        let rep = run_replicate(&cfg, i).unwrap();
        let snap = &rep.snapshots[0];
        let n = snap.len() as f64;
        mean.push(snap.positions().sum::<f64>() / n);
        sign.push(snap.positions().map(f64::signum).sum::<f64>() / n);
    }
    assert!(mean.report().with_target(0.0).within(4.0), "{:?}", mean.report());
    assert!(sign.report().with_target(0.0).within(4.0), "{:?}", sign.report());
}

#[test]
fn mean_count_above_matches_quadrature() {
    let (t, lambda) = (6.0, 0.5);
    let cfg = config(1.0, t, 14);
    let counts: Vec<f64> = (0..10_000)
        .map(|i| count_above(&run_replicate(&cfg, i).unwrap().snapshots[0], lambda) as f64)
        .collect();
    let target = expected_count_above(&cfg.params, t, lambda).unwrap();
    let r = EstimateReport::from_samples(&counts).with_target(target);
    assert!(r.within(4.0), "{r:?}");
}

#[test]
fn mirrored_children_give_the_same_population_law() {
    let cfg = config(1.0, 8.0, 15);
    for i in 0..2000 {
        let a = grow_genealogy(&cfg, &mut tree_stream(cfg.seed, i)).unwrap();
        let b = grow_genealogy_ordered(&cfg, &mut tree_stream(cfg.seed, i), ChildOrder::Mirrored).unwrap();
        let times = [2.0, 5.0, 8.0];
        assert_eq!(
            population_curve(&a, &times).unwrap(),
            population_curve(&b, &times).unwrap()
        );
    }
}

#[test]
fn genealogy_is_byte_identical_for_a_fixed_stream() {
    let cfg = config(1.3, 6.0, 16);
    for i in 0..20 {
        let a = grow_genealogy(&cfg, &mut tree_stream(cfg.seed, i))
            .unwrap()
            .to_json()
            .unwrap();
        let b = grow_genealogy(&cfg, &mut tree_stream(cfg.seed, i))
            .unwrap()
            .to_json()
            .unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn snapshot_size_is_the_alive_count() {
    let mut cfg = config(1.0, 5.0, 17);
    cfg.observation_times = vec![0.0, 1.0, 2.5, 5.0];
    for i in 0..200 {
        let rep = run_replicate(&cfg, i).unwrap();
        let curve = population_curve(&rep.tree, &cfg.observation_times).unwrap();
        for (s, c) in rep.snapshots.iter().zip(curve) {
            assert_eq!(s.len(), c);
        }
        assert_eq!(rep.snapshots[0].positions().collect::<Vec<_>>(), vec![0.0]);
    }
}

/// Independent model of `|N_t|`: children restart at the origin, so the count
/// is an age-dependent branching process whose lifetime is the time to collect
/// `e ~ Exp(β)` units of local time.
fn bellman_harris_population(beta: f64, t: f64, rng: &mut rand_chacha::ChaCha20Rng) -> u64 {
    use rand_distr::{Distribution, Exp, StandardNormal};
    let exp = Exp::new(beta).unwrap();
    let mut alive = 1u64;
    let mut births = vec![0.0f64];
    while let Some(b) = births.pop() {
        let e: f64 = exp.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        let split = b + e * e / (z * z);
        if split <= t {
            alive += 1;
            births.push(split);
            births.push(split);
        }
    }
    alive
}

fn log2_bin(n: u64) -> usize {
    (64 - n.leading_zeros() as usize).min(9)
}

#[test]
fn population_law_matches_age_dependent_branching() {
    use rand::SeedableRng;
    let (beta, t, n) = (1.0, 6.0, 20_000u64);
    let cfg = config(beta, t, 13);
    let mut engine = vec![0u64; 10];
    for i in 0..n {
        let tree = grow_genealogy(&cfg, &mut tree_stream(cfg.seed, i)).unwrap();
        engine[log2_bin(population_curve(&tree, &[t]).unwrap()[0] as u64)] += 1;
    }
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(99);
    let mut oracle = vec![0u64; 10];
    for _ in 0..n {
        oracle[log2_bin(bellman_harris_population(beta, t, &mut rng))] += 1;
    }
    let r = catalytic_bbm::stats::chi_square_two_sample(&engine, &oracle).unwrap();
    assert!(r.p_value > 1e-3, "{r:?}\n{engine:?}\n{oracle:?}");
}
