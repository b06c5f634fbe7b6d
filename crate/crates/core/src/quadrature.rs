//! Globally adaptive Gauss–Kronrod (7/15) integration.
//!
//! Semi-infinite ranges are mapped onto `(0, 1]` with `x = a + (1 - s)/s`;
//! the doubly infinite line is split at the origin. Kronrod nodes never touch
//! the interval ends, so integrands may be singular or undefined there.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum QuadError {
    #[error("no convergence after {intervals} subintervals: estimate {estimate}, error {error}")]
    NoConvergence {
        estimate: f64,
        error: f64,
        intervals: usize,
    },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
    #[error("invalid integration range [{0}, {1}]")]
    InvalidRange(f64, f64),
}

/// Result of a successful integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// Tolerances and limits. Converged when `error <= max(abs_tol, rel_tol·|value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<Piece, QuadError> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite(center));
    }
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadError::NonFinite(x1));
        }
        if !f2.is_finite() {
            return Err(QuadError::NonFinite(x2));
        }
        kron += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).abs();
    Ok(Piece { lo, hi, value, error })
}

impl Quadrature {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    /// Integrate `f` over `[lo, hi]`; either end may be infinite.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Result<Integral, QuadError> {
        self.integrate_dyn(&f, lo, hi)
    }

    fn integrate_dyn(&self, f: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> Result<Integral, QuadError> {
        if lo.is_nan() || hi.is_nan() {
            return Err(QuadError::InvalidRange(lo, hi));
        }
        if lo == hi {
            return Ok(Integral {
                value: 0.0,
                error: 0.0,
                intervals: 0,
            });
        }
        if lo > hi {
            let r = self.integrate_dyn(f, hi, lo)?;
            return Ok(Integral { value: -r.value, ..r });
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => self.finite(&f, lo, hi),
            (true, false) => self.finite(
                &|s: f64| {
                    let x = lo + (1.0 - s) / s;
                    f(x) / (s * s)
                },
                0.0,
                1.0,
            ),
            (false, true) => self.finite(
                &|s: f64| {
                    let x = hi - (1.0 - s) / s;
                    f(x) / (s * s)
                },
                0.0,
                1.0,
            ),
            (false, false) => {
                let half = Quadrature {
                    abs_tol: 0.5 * self.abs_tol,
                    ..*self
                };
                let left = half.integrate_dyn(f, f64::NEG_INFINITY, 0.0)?;
                let right = half.integrate_dyn(f, 0.0, f64::INFINITY)?;
                Ok(Integral {
                    value: left.value + right.value,
                    error: left.error + right.error,
                    intervals: left.intervals + right.intervals,
                })
            }
        }
    }

    /// Integrate over `[lo, hi]` split at the given interior breakpoints
    /// (kinks or jumps of the integrand). Breakpoints outside the range are ignored.
    pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
        &self,
        f: F,
        lo: f64,
        hi: f64,
        breaks: &[f64],
    ) -> Result<Integral, QuadError> {
        let mut points: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut edges = Vec::with_capacity(points.len() + 2);
        edges.push(lo);
        edges.extend(points);
        edges.push(hi);
        let share = Quadrature {
            abs_tol: self.abs_tol / (edges.len() - 1) as f64,
            ..*self
        };
        let mut total = Integral {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        };
        for w in edges.windows(2) {
            let r = share.integrate(&f, w[0], w[1])?;
            total.value += r.value;
            total.error += r.error;
            total.intervals += r.intervals;
        }
        Ok(total)
    }

    fn finite<F: Fn(f64) -> f64>(&self, f: &F, lo: f64, hi: f64) -> Result<Integral, QuadError> {
        let first = kronrod(f, lo, hi)?;
        let mut value = first.value;
        let mut error = first.error;
        let mut heap = BinaryHeap::new();
        heap.push(first);
        while error > self.abs_tol.max(self.rel_tol * value.abs()) {
            if heap.len() >= self.max_intervals {
                return Err(QuadError::NoConvergence {
                    estimate: value,
                    error,
                    intervals: heap.len(),
                });
            }
            let worst = heap.pop().expect("heap is never empty");
            let mid = 0.5 * (worst.lo + worst.hi);
            if !(mid > worst.lo && mid < worst.hi) {
                // interval can no longer be split in floating point
                return Err(QuadError::NoConvergence {
                    estimate: value,
                    error,
                    intervals: heap.len() + 1,
                });
            }
            let left = kronrod(f, worst.lo, mid)?;
            let right = kronrod(f, mid, worst.hi)?;
            value += left.value + right.value - worst.value;
            error += left.error + right.error - worst.error;
            heap.push(left);
            heap.push(right);
        }
        // re-sum to shed the drift of the incremental updates
        let (value, error) = heap.iter().fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
        Ok(Integral {
            value,
            error,
            intervals: heap.len(),
        })
    }
}

/// Shorthand for [`Quadrature::integrate`] with an absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, abs_tol: f64) -> Result<Integral, QuadError> {
    Quadrature::with_tol(abs_tol).integrate(f, lo, hi)
}
