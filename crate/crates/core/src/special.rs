//! Error functions and the standard normal distribution.
//!
//! `erf`/`erfc` follow the FreeBSD `s_erf.c` rational approximations
//! (|error| < 1 ulp over the representable range). `erfcx` reuses the same
//! rational fits: on `x >= 1.25` the approximation is of the form
//! `erfc(x) = exp(-x² - 0.5625 + R/S) / x`, so the scaled function is
//! `exp(-0.5625 + R/S) / x` with no overflow. Past 28 an asymptotic series
//! takes over.

use std::f64::consts::FRAC_1_SQRT_2;

const ERX: f64 = 8.45062911510467529297e-01;

// erf on [0, 0.84375]
const EFX: f64 = 1.28379167095512586316e-01;
const EFX8: f64 = 1.02703333676410069053e+00;
const PP0: f64 = 1.28379167095512558561e-01;
const PP1: f64 = -3.25042107247001499370e-01;
const PP2: f64 = -2.84817495755985104766e-02;
const PP3: f64 = -5.77027029648944159157e-03;
const PP4: f64 = -2.37630166566501626084e-05;
const QQ1: f64 = 3.97917223959155352819e-01;
const QQ2: f64 = 6.50222499887672944485e-02;
const QQ3: f64 = 5.08130628187576562776e-03;
const QQ4: f64 = 1.32494738004321644526e-04;
const QQ5: f64 = -3.96022827877536812320e-06;

// erf on [0.84375, 1.25]
const PA0: f64 = -2.36211856075265944077e-03;
const PA1: f64 = 4.14856118683748331666e-01;
const PA2: f64 = -3.72207876035701323847e-01;
const PA3: f64 = 3.18346619901161753674e-01;
const PA4: f64 = -1.10894694282396677476e-01;
const PA5: f64 = 3.54783043256182359371e-02;
const PA6: f64 = -2.16637559486879084300e-03;
const QA1: f64 = 1.06420880400844228286e-01;
const QA2: f64 = 5.40397917702171048937e-01;
const QA3: f64 = 7.18286544141962662868e-02;
const QA4: f64 = 1.26171219808761642112e-01;
const QA5: f64 = 1.36370839120290507362e-02;
const QA6: f64 = 1.19844998467991074170e-02;

// erfc on [1.25, 1/0.35]
const RA0: f64 = -9.86494403484714822705e-03;
const RA1: f64 = -6.93858572707181764372e-01;
const RA2: f64 = -1.05586262253232909814e+01;
const RA3: f64 = -6.23753324503260060396e+01;
const RA4: f64 = -1.62396669462573470355e+02;
const RA5: f64 = -1.84605092906711035994e+02;
const RA6: f64 = -8.12874355063065934246e+01;
const RA7: f64 = -9.81432934416914548592e+00;
const SA1: f64 = 1.96512716674392571292e+01;
const SA2: f64 = 1.37657754143519042600e+02;
const SA3: f64 = 4.34565877475229228821e+02;
const SA4: f64 = 6.45387271733267880336e+02;
const SA5: f64 = 4.29008140027567833386e+02;
const SA6: f64 = 1.08635005541779435134e+02;
const SA7: f64 = 6.57024977031928170135e+00;
const SA8: f64 = -6.04244152148580987438e-02;

// erfc on [1/0.35, 28]
const RB0: f64 = -9.86494292470009928597e-03;
const RB1: f64 = -7.99283237680523006574e-01;
const RB2: f64 = -1.77579549177547519889e+01;
const RB3: f64 = -1.60636384855821916062e+02;
const RB4: f64 = -6.37566443368389627722e+02;
const RB5: f64 = -1.02509513161107724954e+03;
const RB6: f64 = -4.83519191608651397019e+02;
const SB1: f64 = 3.03380607434824582924e+01;
const SB2: f64 = 3.25792512996573918826e+02;
const SB3: f64 = 1.53672958608443695994e+03;
const SB4: f64 = 3.19985821950859553908e+03;
const SB5: f64 = 2.55305040643316442583e+03;
const SB6: f64 = 4.74528541206955367215e+02;
const SB7: f64 = -2.24409524465858183362e+01;

const VERY_TINY: f64 = 2.848094538889218e-306;
const TWO_POW_M28: f64 = 3.725290298461914e-9;
const TWO_POW_M56: f64 = 1.3877787807814457e-17;

/// `1/√π`
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
/// `1/√(2π)`
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Crossover to the asymptotic series for `erfcx`.
const ERFCX_ASYMPTOTIC: f64 = 28.0;

#[inline]
fn small_ratio(x: f64) -> f64 {
    let z = x * x;
    let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
    let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
    r / s
}

#[inline]
fn mid_ratio(x: f64) -> f64 {
    let s = x - 1.0;
    let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
    let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
    p / q
}

/// `R/S` such that `erfc(x) = exp(-x² - 0.5625 + R/S) / x`, valid on `[1.25, 28]`.
#[inline]
fn tail_log_correction(x: f64) -> f64 {
    let s = 1.0 / (x * x);
    if x < 1.0 / 0.35 {
        let r = RA0 + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7))))));
        let d = 1.0 + s * (SA1 + s * (SA2 + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8)))))));
        r / d
    } else {
        let r = RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6)))));
        let d = 1.0 + s * (SB1 + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7))))));
        r / d
    }
}

/// `erfc(x)` for `1.25 <= x < 28`, splitting `x²` so the exponent stays exact.
#[inline]
fn erfc_tail(x: f64) -> f64 {
    let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
    let r = (-z * z - 0.5625).exp() * ((z - x) * (z + x) + tail_log_correction(x)).exp();
    r / x
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let value = if ax < 0.84375 {
        if ax < TWO_POW_M28 {
            if ax < VERY_TINY {
                0.125 * (8.0 * ax + EFX8 * ax)
            } else {
                ax + EFX * ax
            }
        } else {
            ax + ax * small_ratio(ax)
        }
    } else if ax < 1.25 {
        ERX + mid_ratio(ax)
    } else if ax >= 6.0 {
        1.0
    } else {
        1.0 - erfc_tail(ax)
    };
    value.copysign(x)
}

/// Complementary error function `2/√π ∫ₓ^∞ e^{-u²} du`.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let negative = x < 0.0;
    let ax = x.abs();
    if ax < 0.84375 {
        let t = if ax < TWO_POW_M56 {
            ax
        } else if ax < 0.25 {
            ax + ax * small_ratio(ax)
        } else {
            0.5 + (ax * small_ratio(ax) + (ax - 0.5))
        };
        return if negative { 1.0 + t } else { 1.0 - t };
    }
    if ax < 1.25 {
        let t = ERX + mid_ratio(ax);
        return if negative { 1.0 + t } else { 1.0 - t };
    }
    if negative {
        return if ax >= 6.0 { 2.0 } else { 2.0 - erfc_tail(ax) };
    }
    if ax < 28.0 {
        erfc_tail(ax)
    } else {
        0.0
    }
}

/// Scaled complementary error function `e^{x²}·erfc(x)`.
///
/// Finite for every `x >= 0`; overflows to `+inf` only for `x` below about `-26.6`.
pub fn erfcx(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 1.25 {
        return (x * x).exp() * erfc(x);
    }
    if x < ERFCX_ASYMPTOTIC {
        return (-0.5625 + tail_log_correction(x)).exp() / x;
    }
    if x.is_infinite() {
        return 0.0;
    }
    // erfcx(x) ~ 1/(x√π) Σ (-1)^k (2k-1)!! / (2x²)^k
    let inv = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..12 {
        term *= -((2 * k - 1) as f64) * inv;
        sum += term;
    }
    FRAC_1_SQRT_PI * sum / x
}

/// `ln erfc(x)`, finite for every finite `x`.
pub fn ln_erfc(x: f64) -> f64 {
    if x > 1.0 {
        erfcx(x).ln() - x * x
    } else {
        erfc(x).ln()
    }
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF `Φ(x) = P(N(0,1) <= x)`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

// Wichura, AS 241 (PPND16).
const A: [f64; 8] = [
    3.387_132_872_796_366_608,
    133.141_667_891_784_377_45,
    1_971.590_950_306_551_442_7,
    13_731.693_765_509_461_125,
    45_921.953_931_549_871_457,
    67_265.770_927_008_700_853,
    33_430.575_583_588_128_105,
    2_509.080_928_730_122_672_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_911_252,
    687.187_007_492_057_908_3,
    5_394.196_021_424_751_107_7,
    21_213.794_301_586_595_867,
    39_307.895_800_092_710_61,
    28_729.085_735_721_942_674,
    5_226.495_278_852_545_925,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_577_34,
    4.630_337_846_156_545_295_9,
    5.769_497_221_460_691_405_5,
    3.647_848_324_763_204_605_04,
    1.270_458_252_452_368_382_58,
    0.241_780_725_177_450_611_77,
    0.022_723_844_989_269_184_583_3,
    7.745_450_142_783_414_076_4e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_758_821_87,
    1.676_384_830_183_803_849_4,
    0.689_767_334_985_100_004_55,
    0.148_103_976_427_480_074_59,
    0.015_198_666_563_616_457_196_6,
    5.475_938_084_995_344_946e-4,
    1.050_750_071_644_416_843_24e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103_777_2,
    5.463_784_911_164_114_369_9,
    1.784_826_539_917_291_335_8,
    0.296_560_571_828_504_891_23,
    0.026_532_189_526_576_123_093,
    0.001_242_660_947_388_078_438_6,
    2.711_555_568_743_487_578_15e-5,
    2.010_334_399_292_288_132_65e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_937_69,
    0.136_929_880_922_735_805_31,
    0.014_875_361_290_850_614_852_5,
    7.868_691_311_456_132_591e-4,
    1.846_318_317_510_054_681_8e-5,
    1.421_511_758_316_445_888_7e-7,
    2.044_263_103_389_939_785_64e-15,
];

#[inline]
fn horner(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Tail branch of AS 241 for `r = sqrt(-ln(min(p, 1-p)))`, returning a positive value.
#[inline]
fn quantile_tail(r: f64) -> f64 {
    if r <= 5.0 {
        let r = r - 1.6;
        horner(&C, r) / horner(&D, r)
    } else {
        let r = r - 5.0;
        horner(&E, r) / horner(&F, r)
    }
}

/// Standard normal quantile `Φ⁻¹(p)`.
///
/// Returns `-inf`/`+inf` at 0 and 1 and NaN outside `[0, 1]`.
pub fn norm_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        return norm_quantile_centered(q);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let x = quantile_tail((-tail.ln()).sqrt());
    let x = if q < 0.0 { -x } else { x };
    refine_quantile(x, p)
}

/// `Φ⁻¹(0.5 + q)` for `|q| < 0.5`, taking the offset from the median directly
/// so that tiny offsets keep their relative precision.
pub fn norm_quantile_centered(q: f64) -> f64 {
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let tail = 0.5 - q.abs();
    let x = quantile_tail((-tail.ln()).sqrt());
    let x = if q < 0.0 { -x } else { x };
    refine_quantile(x, 0.5 + q)
}

/// One Halley step on the tail branch, working on the smaller tail probability.
fn refine_quantile(x: f64, p: f64) -> f64 {
    let (err, density) = if x < 0.0 {
        (norm_cdf(x) - p, norm_pdf(x))
    } else {
        ((1.0 - p) - norm_sf(x), norm_pdf(x))
    };
    if density == 0.0 || !density.is_finite() {
        return x;
    }
    let u = err / density;
    x - u / (1.0 + 0.5 * x * u)
}
