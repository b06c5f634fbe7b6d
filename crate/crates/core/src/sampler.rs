//! Exact samplers for Brownian local time at the origin.
//!
//! Everything here rests on Lévy's identification of `(S_t, S_t − X_t)`
//! (running maximum, distance below it) with `(L_t, |X_t|)` and on the
//! reflection principle, which give `L_t ~ |N(0, t)|`, the first passage of
//! local time to level `e` as `e²/Z²`, and a closed-form running maximum
//! given the endpoint.

use serde::{Deserialize, Serialize};

use crate::analytic::Params;
use crate::error::{invalid, Result};
use crate::rng::RngStream;
use crate::special::{erf, norm_quantile_centered};
use std::f64::consts::FRAC_1_SQRT_2;

/// Width of the occupation band of the discretized oracle, in units of `√dt`.
pub const OCCUPATION_WIDTH: f64 = 1.0;

/// Position and accumulated local time at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionLocalTime {
    pub x: f64,
    pub l: f64,
}

/// `L_t`, distributed as `|N(0, t)|`.
pub fn sample_local_time(t: f64, rng: &mut RngStream) -> f64 {
    t.sqrt() * rng.standard_normal().abs()
}

/// Local-time threshold at which a particle splits: `Exp(β)`.
pub fn sample_branch_threshold(params: &Params, rng: &mut RngStream) -> f64 {
    rng.exponential() / params.beta
}

/// First time the local time reaches `e`: equal in law to the first passage of
/// a standard Brownian motion to `e`, i.e. `e²/Z²`.
pub fn sample_hitting_time(e: f64, rng: &mut RngStream) -> f64 {
    if e == 0.0 {
        return 0.0;
    }
    let z = rng.standard_normal();
    e * e / (z * z)
}

/// Running maximum `S` and endpoint `B` of a Brownian path on `[0, t]`, returned
/// as `(S, S − B)`. `S − B` is formed without cancellation on both signs of `B`.
#[inline]
fn max_and_gap(t: f64, rng: &mut RngStream) -> (f64, f64) {
    let b = t.sqrt() * rng.standard_normal();
    let w = -2.0 * t * rng.ln_uniform();
    let r = (b * b + w).sqrt();
    if b >= 0.0 {
        let s = 0.5 * (b + r);
        (s, if w == 0.0 { 0.0 } else { w / (2.0 * (r + b)) })
    } else {
        let s = if w == 0.0 { 0.0 } else { w / (2.0 * (r - b)) };
        (s, 0.5 * (r - b))
    }
}

/// Exact draw of `(X_t, L_t)` for Brownian motion from the origin.
pub fn sample_position_and_localtime(t: f64, rng: &mut RngStream) -> PositionLocalTime {
    let (s, gap) = max_and_gap(t, rng);
    let sign = rng.sign();
    PositionLocalTime { x: sign * gap, l: s }
}

/// Exact draw of `X_t` given `L_t < e`, for Brownian motion from the origin.
///
/// Inverse-CDF in two steps: `L_t` from the half-normal truncated to `[0, e)`,
/// then `|X_t|` given `L_t = l` from `P(|X| > x | l) = exp(−(x² + 2lx)/2t)`.
pub fn sample_position_given_no_branch(t: f64, e: f64, rng: &mut RngStream) -> Result<f64> {
    if !(e > 0.0) {
        return Err(invalid("e", format!("threshold must be > 0, got {e}")));
    }
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be > 0, got {t}")));
    }
    let l = truncated_local_time(t, e, rng);
    let x = gap_given_local_time(t, l, rng);
    Ok(rng.sign() * x)
}

/// Step (i): `L_t` conditioned on `L_t < e`. Strictly below `e`.
#[inline]
pub(crate) fn truncated_local_time(t: f64, e: f64, rng: &mut RngStream) -> f64 {
    let sqrt_t = t.sqrt();
    // P(L_t < e) = 2Φ(e/√t) − 1 = erf(e/√(2t))
    let mass = erf(e / sqrt_t * FRAC_1_SQRT_2);
    let q = 0.5 * rng.uniform() * mass;
    let l = sqrt_t * norm_quantile_centered(q);
    if l >= e {
        e.next_down()
    } else {
        l
    }
}

/// Step (ii): `|X_t|` given `L_t = l`.
#[inline]
pub fn gap_given_local_time(t: f64, l: f64, rng: &mut RngStream) -> f64 {
    let w = -2.0 * t * rng.ln_uniform();
    if w == 0.0 {
        return 0.0;
    }
    // −l + √(l² + w), rationalized
    w / (l + (l * l + w).sqrt())
}

/// Euler path with an occupation-band estimate of local time.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedPath {
    /// Positions at `0, h, 2h, …, t`.
    pub path: Vec<f64>,
    pub dt: f64,
    pub local_time: f64,
}

impl DiscretizedPath {
    pub fn endpoint(&self) -> f64 {
        *self.path.last().expect("path has at least one point")
    }
}

/// Random-walk approximation, used only to validate the exact samplers.
///
/// Local time is `(1/2ε)·h·#{k : |X_{kh}| < ε}` with `ε = OCCUPATION_WIDTH·√h`.
pub fn sample_path_discretized(t: f64, dt: f64, rng: &mut RngStream) -> Result<DiscretizedPath> {
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    if !(t > 0.0) {
        return Err(invalid("t", format!("must be > 0, got {t}")));
    }
    let steps = ((t / dt).round() as usize).max(1);
    let h = t / steps as f64;
    let sd = h.sqrt();
    let eps = OCCUPATION_WIDTH * sd;
    let mut path = Vec::with_capacity(steps + 1);
    let mut x: f64 = 0.0;
    let mut inside = 0usize;
    path.push(x);
    for _ in 0..steps {
        if x.abs() < eps {
            inside += 1;
        }
        x += sd * rng.standard_normal();
        path.push(x);
    }
    Ok(DiscretizedPath {
        path,
        dt: h,
        local_time: inside as f64 * h / (2.0 * eps),
    })
}
