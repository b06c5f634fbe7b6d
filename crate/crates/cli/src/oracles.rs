//! Reference laws and integrity checks used by `sampler-selftest` and `formulas`.

use catalytic_bbm::analytic::{
    joint_position_localtime_density, speed_measure_density, stationary_density, transition_density,
    transition_density_lebesgue, DensityQuery, Params,
};
use catalytic_bbm::quadrature::Quadrature;
use catalytic_bbm::special::{erf, erfc, erfcx, norm_cdf, norm_pdf, norm_quantile};
use catalytic_bbm::Result;

/// High-precision reference values: `function argument value` per line.
pub const SPECIAL_REFERENCE: &str = include_str!("../../core/tests/fixtures/special_reference.txt");

fn quad() -> Quadrature {
    Quadrature {
        abs_tol: 1e-11,
        rel_tol: 1e-11,
        max_intervals: 8000,
    }
}

/// One analytic check: the worst deviation found and the bound it must respect.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

/// Edges of `k` equal-probability cells for `X_t ~ N(0, t)` and for `L_t ~ |N(0, t)|`.
pub fn joint_edges(t: f64, k: usize) -> (Vec<f64>, Vec<f64>) {
    let sd = t.sqrt();
    let xs = (0..=k).map(|i| sd * norm_quantile(i as f64 / k as f64)).collect();
    let ls = (0..=k)
        .map(|i| sd * norm_quantile(0.5 + 0.5 * i as f64 / k as f64))
        .collect();
    (xs, ls)
}

/// Mass of `[a, b] × [c, d]` under the joint law of `(X_t, L_t)`, for cells
/// that do not straddle `x = 0`. The density is `−Φ_t''(|x| + y)`, so the
/// double integral telescopes to four normal CDF values.
pub fn joint_cell(t: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let (a, b) = if b <= 0.0 { (-b, -a) } else { (a, b) };
    let phi = |u: f64| norm_cdf(u / t.sqrt());
    (phi(b + c) - phi(a + c)) - (phi(b + d) - phi(a + d))
}

/// Same cell mass by nested quadrature of the density.
pub fn joint_cell_by_quadrature(t: f64, a: f64, b: f64, c: f64, d: f64) -> Result<f64> {
    let q = Quadrature {
        abs_tol: 1e-12,
        rel_tol: 1e-10,
        max_intervals: 4000,
    };
    let inner = |x: f64| {
        q.integrate(|y| joint_position_localtime_density(t, x, y).unwrap_or(0.0), c, d)
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    };
    Ok(q.integrate(inner, a, b)?.value)
}

/// CDF of `X_t` given `L_t < e`, tabulated by integrating the joint density
/// over `y ∈ [0, e)` and then cumulatively in `x`, with linear interpolation.
pub fn conditional_position_cdf(t: f64, e: f64) -> Result<impl Fn(f64) -> f64> {
    let q = Quadrature {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        max_intervals: 2000,
    };
    let density = |x: f64| {
        q.integrate(|y| joint_position_localtime_density(t, x, y).unwrap_or(0.0), 0.0, e)
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    };
    let reach = 10.0 * t.sqrt();
    let m = 4000;
    let h = 2.0 * reach / m as f64;
    let mut cum = vec![0.0; m + 1];
    for i in 0..m {
        let lo = -reach + i as f64 * h;
        cum[i + 1] = cum[i] + q.integrate_with_breaks(density, lo, lo + h, &[0.0])?.value;
    }
    let total = cum[m];
    Ok(move |x: f64| {
        if x <= -reach {
            return 0.0;
        }
        if x >= reach {
            return 1.0;
        }
        let s = (x + reach) / h;
        let i = (s.floor() as usize).min(m - 1);
        let w = s - i as f64;
        ((1.0 - w) * cum[i] + w * cum[i + 1]) / total
    })
}

fn p(params: &Params, t: f64, x: f64, y: f64) -> f64 {
    DensityQuery::new(t, x, y)
        .and_then(|q| transition_density(params, &q))
        .unwrap_or(f64::NAN)
}

fn whole_line<F: Fn(f64) -> f64>(f: F, breaks: &[f64]) -> Result<f64> {
    Ok(quad()
        .integrate_with_breaks(f, f64::NEG_INFINITY, f64::INFINITY, breaks)?
        .value)
}

/// Normalization, Chapman–Kolmogorov and stationarity checks of the drifted
/// transition density, plus normalization and marginals of the joint density.
pub fn analytic_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let gammas = [0.5, 1.0, 2.0];

    let mut worst = 0.0f64;
    for &g in &gammas {
        let params = Params::with_gamma(1.0, g)?;
        for &t in &[0.1, 1.0, 10.0] {
            for &x in &[0.0, 1.0, -3.0] {
                let total = whole_line(
                    |y| p(&params, t, x, y) * speed_measure_density(&params, y),
                    &[0.0, x, -x],
                )?;
                worst = worst.max((total - 1.0).abs());
            }
        }
    }
    checks.push(Check {
        name: "transition density integrates to 1 against the speed measure".into(),
        worst,
        tolerance: 1e-6,
    });

    let mut worst = 0.0f64;
    for &g in &[0.5, 1.0] {
        let params = Params::with_gamma(1.0, g)?;
        for &(s, t, x, y) in &[(0.5, 1.0, 0.0, 0.7), (1.0, 2.0, -1.0, 1.5), (0.3, 4.0, 2.0, -0.2)] {
            let lhs = whole_line(
                |z| p(&params, s, x, z) * p(&params, t, z, y) * speed_measure_density(&params, z),
                &[0.0, x, y],
            )?;
            let rhs = p(&params, s + t, x, y);
            worst = worst.max((lhs - rhs).abs() / rhs.max(1.0));
        }
    }
    checks.push(Check {
        name: "Chapman-Kolmogorov".into(),
        worst,
        tolerance: 1e-5,
    });

    let mut worst = 0.0f64;
    for &g in &gammas {
        let params = Params::with_gamma(1.0, g)?;
        for i in -400..=400 {
            let y = i as f64 * 0.02;
            let q = DensityQuery::new(50.0, 0.0, y)?;
            worst = worst.max((transition_density_lebesgue(&params, &q)? - stationary_density(&params, y)).abs());
        }
    }
    checks.push(Check {
        name: "p(50; 0, y) m(y) approaches the stationary density".into(),
        worst,
        tolerance: 1e-3,
    });

    let mut worst = 0.0f64;
    for &g in &gammas {
        let params = Params::with_gamma(1.0, g)?;
        let pi_mass = whole_line(|x| stationary_density(&params, x), &[0.0])?;
        let m_mass = whole_line(|x| speed_measure_density(&params, x), &[0.0])?;
        let moment = whole_line(
            |x| {
                let v = stationary_density(&params, x);
                if v == 0.0 {
                    0.0
                } else {
                    v * (g * x.abs()).exp()
                }
            },
            &[0.0],
        )?;
        worst = worst
            .max((pi_mass - 1.0).abs())
            .max((m_mass - 2.0 / g).abs())
            .max((moment - 2.0).abs());
    }
    checks.push(Check {
        name: "stationary mass 1, speed-measure mass 2/gamma, stationary mean of exp(gamma|x|) = 2".into(),
        worst,
        tolerance: 1e-9,
    });

    let mut worst = 0.0f64;
    for &t in &[0.5f64, 1.0, 3.0] {
        let sd = t.sqrt();
        let x_marginal = |x: f64| {
            quad()
                .integrate(
                    |y| joint_position_localtime_density(t, x, y).unwrap_or(0.0),
                    0.0,
                    f64::INFINITY,
                )
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        };
        let total = whole_line(x_marginal, &[0.0])?;
        worst = worst.max((total - 1.0).abs());
        for &x in &[-2.0, -0.4, 0.0, 0.9, 3.1] {
            worst = worst.max((x_marginal(x) - norm_pdf(x / sd) / sd).abs());
        }
        for &y in &[0.05, 0.5, 1.2, 2.5] {
            let got = whole_line(|x| joint_position_localtime_density(t, x, y).unwrap_or(0.0), &[0.0])?;
            worst = worst.max((got - 2.0 * norm_pdf(y / sd) / sd).abs());
        }
    }
    checks.push(Check {
        name: "joint density of (X_t, L_t): total mass and both marginals".into(),
        worst,
        tolerance: 1e-6,
    });

    Ok(checks)
}

/// Largest relative error against [`SPECIAL_REFERENCE`].
pub fn special_function_check() -> Check {
    let mut worst = 0.0f64;
    for line in SPECIAL_REFERENCE
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
    {
        let mut it = line.split_whitespace();
        let (Some(name), Some(x), Some(v)) = (it.next(), it.next(), it.next()) else {
            worst = f64::INFINITY;
            continue;
        };
        let (x, want): (f64, f64) = match (x.parse(), v.parse()) {
            (Ok(x), Ok(v)) => (x, v),
            _ => {
                worst = f64::INFINITY;
                continue;
            }
        };
        let got = match name {
            "erf" => erf(x),
            "erfc" => erfc(x),
            "erfcx" => erfcx(x),
            "norm_cdf" => norm_cdf(x),
            "norm_quantile" => norm_quantile(x),
            _ => f64::NAN,
        };
        let err = if want == 0.0 {
            got.abs()
        } else {
            ((got - want) / want).abs()
        };
        worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
    }
    Check {
        name: "special functions against stored references (relative)".into(),
        worst,
        tolerance: 1e-12,
    }
}
