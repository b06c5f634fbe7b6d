use catalytic_bbm::analytic::{
    joint_position_localtime_density, speed_measure_density, stationary_density, transition_density,
    transition_density_lebesgue, DensityQuery, Params,
};
use catalytic_bbm::quadrature::Quadrature;
use catalytic_bbm::special::norm_pdf;

const GAMMAS: [f64; 3] = [0.5, 1.0, 2.0];
const TIMES: [f64; 3] = [0.1, 1.0, 10.0];
const STARTS: [f64; 3] = [0.0, 1.0, -3.0];

fn quad() -> Quadrature {
    Quadrature {
        abs_tol: 1e-11,
        rel_tol: 1e-11,
        max_intervals: 8000,
    }
}

fn p(params: &Params, t: f64, x: f64, y: f64) -> f64 {
    transition_density(params, &DensityQuery::new(t, x, y).unwrap()).unwrap()
}

#[test]
fn transition_density_integrates_to_one_against_speed_measure() {
    for &g in &GAMMAS {
        let params = Params::with_gamma(1.0, g).unwrap();
        for &t in &TIMES {
            for &x in &STARTS {
                let total = quad()
                    .integrate_with_breaks(
                        |y| p(&params, t, x, y) * speed_measure_density(&params, y),
                        f64::NEG_INFINITY,
                        f64::INFINITY,
                        &[0.0, x, -x],
                    )
                    .unwrap()
                    .value;
                assert!((total - 1.0).abs() < 1e-6, "γ={g} t={t} x={x}: {total}");
            }
        }
    }
}

#[test]
fn lebesgue_form_matches_product() {
    let params = Params::with_gamma(1.0, 1.5).unwrap();
    for &(t, x, y) in &[(0.5, 0.0, 0.3), (2.0, -1.0, 2.0), (7.0, 3.0, -4.0)] {
        let q = DensityQuery::new(t, x, y).unwrap();
        let a = transition_density_lebesgue(&params, &q).unwrap();
        let b = p(&params, t, x, y) * speed_measure_density(&params, y);
        assert!((a / b - 1.0).abs() < 1e-13);
    }
}

#[test]
fn chapman_kolmogorov() {
    for &g in &[0.5, 1.0] {
        let params = Params::with_gamma(1.0, g).unwrap();
        for &(s, t, x, y) in &[(0.5, 1.0, 0.0, 0.7), (1.0, 2.0, -1.0, 1.5), (0.3, 4.0, 2.0, -0.2)] {
            let lhs = quad()
                .integrate_with_breaks(
                    |z| p(&params, s, x, z) * p(&params, t, z, y) * speed_measure_density(&params, z),
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                    &[0.0, x, y],
                )
                .unwrap()
                .value;
            let rhs = p(&params, s + t, x, y);
            assert!(
                (lhs - rhs).abs() < 1e-5 * rhs.max(1.0),
                "γ={g} s={s} t={t} x={x} y={y}: {lhs} vs {rhs}"
            );
        }
    }
}

#[test]
fn long_time_law_is_stationary() {
    for &g in &GAMMAS {
        let params = Params::with_gamma(1.0, g).unwrap();
        let worst = (-400..=400)
            .map(|i| i as f64 * 0.02)
            .map(|y| {
                let q = DensityQuery::new(50.0, 0.0, y).unwrap();
                (transition_density_lebesgue(&params, &q).unwrap() - stationary_density(&params, y)).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "γ={g}: sup gap {worst}");
    }
}

#[test]
fn stationary_and_speed_measure_masses() {
    for &g in &GAMMAS {
        let params = Params::with_gamma(1.0, g).unwrap();
        let whole = |f: &dyn Fn(f64) -> f64| {
            quad()
                .integrate_with_breaks(f, f64::NEG_INFINITY, f64::INFINITY, &[0.0])
                .unwrap()
                .value
        };
        let pi_mass = whole(&|x| stationary_density(&params, x));
        let m_mass = whole(&|x| speed_measure_density(&params, x));
        let moment = whole(&|x| {
            let pi = stationary_density(&params, x);
            if pi == 0.0 {
                0.0
            } else {
                pi * (g * x.abs()).exp()
            }
        });
        assert!((pi_mass - 1.0).abs() < 1e-9, "γ={g}: ∫π = {pi_mass}");
        assert!((m_mass - 2.0 / g).abs() < 1e-9, "γ={g}: ∫m = {m_mass}");
        assert!((moment - 2.0).abs() < 1e-9, "γ={g}: E e^(γ|x|) = {moment}");
    }
}

fn joint(t: f64, x: f64, y: f64) -> f64 {
    joint_position_localtime_density(t, x, y).unwrap()
}

#[test]
fn joint_density_normalization_and_marginals() {
    for &t in &[0.5, 1.0, 3.0] {
        let q = quad();
        let x_marginal = |x: f64| {
            q.integrate(|y| if y > 0.0 { joint(t, x, y) } else { 0.0 }, 0.0, f64::INFINITY)
                .unwrap()
                .value
        };
        let total = q
            .integrate_with_breaks(x_marginal, f64::NEG_INFINITY, f64::INFINITY, &[0.0])
            .unwrap()
            .value;
        assert!((total - 1.0).abs() < 1e-6, "t={t}: {total}");
        let sd = t.sqrt();
        for &x in &[-2.0, -0.4, 0.0, 0.9, 3.1] {
            let want = norm_pdf(x / sd) / sd;
            assert!((x_marginal(x) - want).abs() < 1e-6, "t={t} x={x}");
        }
        for &y in &[0.05, 0.5, 1.2, 2.5] {
            let got = q
                .integrate_with_breaks(|x| joint(t, x, y), f64::NEG_INFINITY, f64::INFINITY, &[0.0])
                .unwrap()
                .value;
            let want = 2.0 * norm_pdf(y / sd) / sd;
            assert!((got - want).abs() < 1e-6, "t={t} y={y}");
        }
    }
}
