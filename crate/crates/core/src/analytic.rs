//! Closed-form quantities of the model and of Brownian motion with a constant
//! drift of magnitude `gamma` toward the origin.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quadrature::Quadrature;
use crate::special::{erfcx, ln_erfc, norm_cdf};

const LN_2: f64 = std::f64::consts::LN_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Model parameters: branching rate per unit local time, and the drift used by
/// the single-particle laws (defaults to `beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub beta: f64,
    pub gamma: f64,
}

impl Params {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_gamma(beta, beta)
    }

    pub fn with_gamma(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(invalid("beta", format!("must be finite and > 0, got {beta}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid("gamma", format!("must be finite and > 0, got {gamma}")));
        }
        Ok(Self { beta, gamma })
    }
}

/// Evaluation point `(t, x, y)` for the drifted transition density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityQuery {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl DensityQuery {
    pub fn new(t: f64, x: f64, y: f64) -> Result<Self> {
        let q = Self { t, x, y };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(invalid("t", format!("must be finite and > 0, got {}", self.t)));
        }
        if !self.x.is_finite() {
            return Err(invalid("x", "must be finite"));
        }
        if !self.y.is_finite() {
            return Err(invalid("y", "must be finite"));
        }
        Ok(())
    }
}

/// `E|N_t| = 2Φ(β√t)·e^{β²t/2}`.
pub fn expected_population(params: &Params, t: f64) -> f64 {
    let b = params.beta;
    2.0 * norm_cdf(b * t.sqrt()) * (0.5 * b * b * t).exp()
}

/// `P(|N_t| = 1) = E e^{−βL_t} = 2Φ(−β√t)·e^{β²t/2} = erfcx(β√(t/2))`.
pub fn no_branch_probability(params: &Params, t: f64) -> f64 {
    erfcx(params.beta * (0.5 * t).sqrt())
}

/// Exponential rate of `E|N_t^{λt}|`: `β²/2 − βλ` below `λ = β`, `−λ²/2` from `β` on.
pub fn delta_lambda(params: &Params, lambda: f64) -> f64 {
    let b = params.beta;
    if lambda < b {
        0.5 * b * b - b * lambda
    } else {
        -0.5 * lambda * lambda
    }
}

/// Logarithms of the Gaussian term and of the erfc term of `p(t; x, y)`.
///
/// The erfc term goes through `ln_erfc`, which switches to the scaled
/// complementary error function for large arguments, so neither piece
/// overflows or underflows prematurely.
pub fn ln_transition_terms(gamma: f64, t: f64, x: f64, y: f64) -> (f64, f64) {
    let s = x.abs() + y.abs();
    let d = x - y;
    let gaussian = gamma * s - 0.5 * gamma * gamma * t - d * d / (2.0 * t) - LN_2 - LN_SQRT_2PI - 0.5 * t.ln();
    let arg = (s - gamma * t) / (2.0 * t).sqrt();
    let tail = (0.25 * gamma).ln() + ln_erfc(arg);
    (gaussian, tail)
}

/// Transition density of Brownian motion with drift `gamma` toward the origin,
/// with respect to the speed measure `m(dy) = 2e^{−2γ|y|}dy`.
pub fn transition_density(params: &Params, q: &DensityQuery) -> Result<f64> {
    q.validate()?;
    let (a, b) = ln_transition_terms(params.gamma, q.t, q.x, q.y);
    Ok(a.exp() + b.exp())
}

/// `p(t; x, y)·m(y)`: the same transition law as a density in `dy`.
pub fn transition_density_lebesgue(params: &Params, q: &DensityQuery) -> Result<f64> {
    q.validate()?;
    let (a, b) = ln_transition_terms(params.gamma, q.t, q.x, q.y);
    let ln_m = LN_2 - 2.0 * params.gamma * q.y.abs();
    Ok((a + ln_m).exp() + (b + ln_m).exp())
}

/// `2e^{−2γ|y|}`.
pub fn speed_measure_density(params: &Params, y: f64) -> f64 {
    2.0 * (-2.0 * params.gamma * y.abs()).exp()
}

/// `γe^{−2γ|x|}`.
pub fn stationary_density(params: &Params, x: f64) -> f64 {
    params.gamma * (-2.0 * params.gamma * x.abs()).exp()
}

/// Joint density of Brownian position `x` and local time at zero `y` at time `t`,
/// started from the origin: `(|x| + y)/√(2πt³)·exp(−(|x| + y)²/2t)`.
pub fn joint_position_localtime_density(t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid("t", format!("must be finite and > 0, got {t}")));
    }
    if !(y.is_finite() && y > 0.0) {
        return Err(invalid("y", format!("local time must be finite and > 0, got {y}")));
    }
    if !x.is_finite() {
        return Err(invalid("x", "must be finite"));
    }
    let u = x.abs() + y;
    Ok(u / (2.0 * std::f64::consts::PI * t * t * t).sqrt() * (-u * u / (2.0 * t)).exp())
}

/// `∫ f(x)·βe^{−β|x|} dx`, the constant multiplying the martingale limit in the
/// law of large numbers. `f` must be bounded.
pub fn slln_limit_integral<F: Fn(f64) -> f64>(params: &Params, f: F) -> Result<f64> {
    slln_limit_integral_with_breaks(params, f, &[])
}

/// As [`slln_limit_integral`], with known discontinuities of `f` passed as breakpoints.
pub fn slln_limit_integral_with_breaks<F: Fn(f64) -> f64>(params: &Params, f: F, breaks: &[f64]) -> Result<f64> {
    let b = params.beta;
    let mut points = breaks.to_vec();
    points.push(0.0);
    let quad = Quadrature {
        abs_tol: 1e-11,
        rel_tol: 0.0,
        max_intervals: 8000,
    };
    let r = quad.integrate_with_breaks(
        |x| f(x) * b * (-b * x.abs()).exp(),
        f64::NEG_INFINITY,
        f64::INFINITY,
        &points,
    )?;
    Ok(r.value)
}

/// `E|N_t^{λt}| = e^{β²t/2} ∫_{λt}^∞ e^{β|x|} p(t; 0, x) m(dx)` with `p` taken at drift `β`.
pub fn expected_count_above(params: &Params, t: f64, lambda: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid("t", format!("must be finite and > 0, got {t}")));
    }
    if !lambda.is_finite() {
        return Err(invalid("lambda", "must be finite"));
    }
    let b = params.beta;
    let shift = 0.5 * b * b * t;
    let integrand = |x: f64| {
        let (g, e) = ln_transition_terms(b, t, 0.0, x);
        let ln_w = LN_2 - b * x.abs() + shift;
        (g + ln_w).exp() + (e + ln_w).exp()
    };
    let lo = lambda * t;
    let scale = expected_population(params, t);
    let quad = Quadrature {
        abs_tol: 1e-12 * scale,
        rel_tol: 1e-10,
        max_intervals: 4000,
    };
    Ok(quad
        .integrate_with_breaks(integrand, lo, f64::INFINITY, &[0.0, b * t])?
        .value)
}
