//! Estimator aggregation and goodness-of-fit checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::analytic::Params;
use crate::engine::Snapshot;
use crate::error::{Error, Result};

/// Critical value for `√n·D` used throughout (α ≈ 0.001).
pub const KS_CRITICAL: f64 = 1.95;

/// Bins with fewer expected counts than this are pooled before a χ² test.
pub const MIN_EXPECTED_PER_BIN: f64 = 20.0;

/// Version tag for serialized reports.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Monte Carlo estimate with its standard error, optionally against a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub std_error: f64,
    pub n: u64,
    pub target: Option<f64>,
    pub z: Option<f64>,
}

impl EstimateReport {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut acc = MeanAccumulator::default();
        samples.iter().for_each(|&x| acc.push(x));
        acc.report()
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self.z = Some(if self.std_error > 0.0 {
            (self.estimate - target) / self.std_error
        } else if self.estimate == target {
            0.0
        } else {
            f64::INFINITY.copysign(self.estimate - target)
        });
        self
    }

    /// `|estimate − target| <= k·SE`; false without a target.
    pub fn within(&self, k: f64) -> bool {
        self.z.is_some_and(|z| z.abs() <= k)
    }

    /// `|a − b| / √(SE_a² + SE_b²)`.
    pub fn combined_z(&self, other: &EstimateReport) -> f64 {
        let se = self.std_error.hypot(other.std_error);
        let d = self.estimate - other.estimate;
        if se > 0.0 {
            d.abs() / se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub const CSV_HEADER: &'static str = "estimate,std_error,n,target,z";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.estimate,
            self.std_error,
            self.n,
            opt(self.target),
            opt(self.z)
        )
    }
}

/// Streaming mean/variance (Welford) with Chan's pairwise merge, so partial
/// results from parallel replicates can be combined.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanAccumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn report(&self) -> EstimateReport {
        EstimateReport {
            estimate: self.mean,
            std_error: if self.n == 0 {
                0.0
            } else {
                (self.variance() / self.n as f64).sqrt()
            },
            n: self.n,
            target: None,
            z: None,
        }
    }
}

/// Least-squares fit of `log value = intercept + slope·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub window: (f64, f64),
}

impl RateFit {
    pub const CSV_HEADER: &'static str = "slope,intercept,residual_rms,window_start,window_end";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.slope, self.intercept, self.residual_rms, self.window.0, self.window.1
        )
    }
}

/// Fit the exponential rate of positive `values` observed at `times`.
pub fn fit_rate(times: &[f64], values: &[f64]) -> Result<RateFit> {
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveValue { index, value });
    }
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    fit_log_rate(times, &logs)
}

/// Ordinary least squares on already-logged values.
pub fn fit_log_rate(times: &[f64], log_values: &[f64]) -> Result<RateFit> {
    let n = times.len().min(log_values.len());
    if n < 3 || times.len() != log_values.len() {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let nf = n as f64;
    let tm = times.iter().sum::<f64>() / nf;
    let ym = log_values.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&t, &y) in times.iter().zip(log_values) {
        sxx += (t - tm) * (t - tm);
        sxy += (t - tm) * (y - ym);
    }
    if sxx == 0.0 {
        return Err(Error::TooFewPoints { needed: 3, got: 1 });
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let rss: f64 = times
        .iter()
        .zip(log_values)
        .map(|(&t, &y)| {
            let r = y - intercept - slope * t;
            r * r
        })
        .sum();
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RateFit {
        slope,
        intercept,
        residual_rms: (rss / nf).sqrt(),
        window: (lo, hi),
    })
}

/// One-sample Kolmogorov–Smirnov distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    /// `√n·D`
    pub scaled: f64,
    pub n: usize,
}

impl KsResult {
    pub fn passes(&self) -> bool {
        self.scaled < KS_CRITICAL
    }
}

/// Sup-distance between the empirical CDF of `samples` and `cdf`.
///
/// Rejects fewer than 10 samples, and a `cdf` that decreases or leaves
/// `[0, 1]` along the sorted samples.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    let n = samples.len();
    if n < 10 {
        return Err(Error::TooFewPoints { needed: 10, got: n });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    let mut prev = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) || f < prev - 1e-12 {
            return Err(Error::NonMonotoneCdf { at: x });
        }
        prev = f;
        let below = i as f64 / nf;
        let above = (i + 1) as f64 / nf;
        d = d.max(above - f).max(f - below);
    }
    Ok(KsResult {
        d,
        scaled: nf.sqrt() * d,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Cells actually compared after pooling sparse ones.
    pub cells: usize,
}

/// Pearson χ² of observed counts against cell probabilities. Cells expecting
/// fewer than [`MIN_EXPECTED_PER_BIN`] are pooled into one cell.
pub fn chi_square_test(observed: &[u64], probabilities: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != probabilities.len() {
        return Err(Error::TooFewPoints {
            needed: probabilities.len(),
            got: observed.len(),
        });
    }
    let total: u64 = observed.iter().sum();
    let norm: f64 = probabilities.iter().sum();
    let n = total as f64;
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probabilities) {
        let e = n * p / norm;
        if e < MIN_EXPECTED_PER_BIN {
            pool_obs += o as f64;
            pool_exp += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pool_exp > 0.0 {
        stat += (pool_obs - pool_exp).powi(2) / pool_exp;
        cells += 1;
    }
    finish_chi_square(stat, cells, cells.saturating_sub(1))
}

/// χ² test of homogeneity between two histograms over the same cells.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquareResult> {
    if a.len() != b.len() {
        return Err(Error::TooFewPoints {
            needed: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut pa, mut pb) = (0.0, 0.0);
    let add = |oa: f64, ob: f64, stat: &mut f64| {
        let col = oa + ob;
        let ea = na * col / n;
        let eb = nb * col / n;
        *stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    };
    for (&x, &y) in a.iter().zip(b) {
        let col = (x + y) as f64;
        if na.min(nb) * col / n < MIN_EXPECTED_PER_BIN {
            pa += x as f64;
            pb += y as f64;
        } else {
            add(x as f64, y as f64, &mut stat);
            cells += 1;
        }
    }
    if pa + pb > 0.0 {
        add(pa, pb, &mut stat);
        cells += 1;
    }
    finish_chi_square(stat, cells, cells.saturating_sub(1))
}

fn finish_chi_square(statistic: f64, cells: usize, df: usize) -> Result<ChiSquareResult> {
    if df == 0 {
        return Err(Error::TooFewPoints { needed: 2, got: cells });
    }
    let dist = ChiSquared::new(df as f64).expect("df > 0");
    Ok(ChiSquareResult {
        statistic,
        df,
        p_value: dist.sf(statistic),
        cells,
    })
}

/// `k + 1` edges splitting a law into `k` equal-probability cells, from its quantile function.
pub fn equal_probability_edges<Q: Fn(f64) -> f64>(quantile: Q, k: usize) -> Vec<f64> {
    (0..=k).map(|i| quantile(i as f64 / k as f64)).collect()
}

/// Index of the cell of `edges` containing `x`, clamped to the outer cells.
pub fn bin_index(edges: &[f64], x: f64) -> usize {
    let cells = edges.len() - 1;
    edges[1..cells].partition_point(|&e| e <= x)
}

/// Median (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let mut acc = MeanAccumulator::default();
    values.iter().for_each(|&x| acc.push(x));
    acc.variance().sqrt()
}

/// `Σ_u f(X_t^u) / |N_t|`.
pub fn empirical_slln_ratio<F: Fn(f64) -> f64>(snapshot: &Snapshot, f: F) -> Result<f64> {
    if snapshot.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    Ok(snapshot.positions().map(f).sum::<f64>() / snapshot.len() as f64)
}

/// `e^{−β²t/2} Σ_u f(X_t^u)`.
pub fn empirical_scaled_sum<F: Fn(f64) -> f64>(snapshot: &Snapshot, params: &Params, f: F) -> f64 {
    let b = params.beta;
    (-0.5 * b * b * snapshot.t).exp() * snapshot.positions().map(f).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Particle;
    use proptest::prelude::*;

    fn snapshot(xs: &[f64], t: f64) -> Snapshot {
        Snapshot {
            t,
            particles: xs.iter().map(|&x| Particle { node: 0, x }).collect(),
        }
    }

    #[test]
    fn report_of_constants() {
        let r = EstimateReport::from_samples(&[0.0; 50]).with_target(0.0);
        assert_eq!((r.estimate, r.std_error, r.n), (0.0, 0.0, 50));
        assert_eq!(r.z, Some(0.0));
        assert!(r.within(4.0));
        assert!(!EstimateReport::from_samples(&[1.0, 2.0]).within(4.0));
    }

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 113) as f64 * 0.37).collect();
        let mut whole = MeanAccumulator::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut parts = MeanAccumulator::default();
        for chunk in xs.chunks(77) {
            let mut a = MeanAccumulator::default();
            chunk.iter().for_each(|&x| a.push(x));
            parts.merge(&a);
        }
        assert_eq!(parts.count(), whole.count());
        assert!((parts.mean() - whole.mean()).abs() < 1e-12);
        assert!((parts.variance() - whole.variance()).abs() < 1e-9);
    }

    #[test]
    fn fit_rate_on_exact_exponential() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let v: Vec<f64> = t.iter().map(|&s| (0.5 * s).exp()).collect();
        let fit = fit_rate(&t, &v).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert_eq!(fit.window, (0.0, 9.5));
        let mut bad = v.clone();
        bad[3] = 0.0;
        assert!(matches!(
            fit_rate(&t, &bad),
            Err(Error::NonPositiveValue { index: 3, .. })
        ));
        assert!(fit_rate(&t[..2], &v[..2]).is_err());
    }

    #[test]
    fn ks_degenerate_cases() {
        let same = vec![0.3; 100];
        let r = ks_statistic(&same, |x: f64| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.d >= 0.5);
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ecdf = |x: f64| (xs.partition_point(|&v| v <= x)) as f64 / 100.0;
        assert!(ks_statistic(&xs, ecdf).unwrap().d <= 1.0 / 100.0 + 1e-15);
        assert!(ks_statistic(&xs[..5], ecdf).is_err());
        assert!(matches!(
            ks_statistic(&xs, |x: f64| 1.0 - x / 100.0),
            Err(Error::NonMonotoneCdf { .. })
        ));
    }

    #[test]
    fn chi_square_on_exact_counts() {
        let r = chi_square_test(&[100, 100, 100, 100], &[0.25; 4]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.df, 3);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        let r = chi_square_test(&[400, 0, 0, 0], &[0.25; 4]).unwrap();
        assert!(r.p_value < 1e-10);
        // sparse cells get pooled
        let r = chi_square_test(&[500, 480, 10, 10], &[0.49, 0.49, 0.01, 0.01]).unwrap();
        assert_eq!(r.cells, 3);
        let r = chi_square_two_sample(&[50, 60, 70], &[500, 600, 700]).unwrap();
        assert!(r.statistic < 1e-12);
    }

    #[test]
    fn bins_and_medians() {
        let edges = [f64::NEG_INFINITY, -1.0, 0.0, 1.0, f64::INFINITY];
        assert_eq!(bin_index(&edges, -5.0), 0);
        assert_eq!(bin_index(&edges, -1.0), 1);
        assert_eq!(bin_index(&edges, 0.5), 2);
        assert_eq!(bin_index(&edges, 7.0), 3);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn slln_estimators() {
        let p = Params::new(1.0).unwrap();
        let s = snapshot(&[-1.0, 0.2, 0.5, 3.0], 2.0);
        assert_eq!(empirical_slln_ratio(&s, |_| 1.0).unwrap(), 1.0);
        let right = empirical_slln_ratio(&s, |x| if x >= 0.0 { 1.0 } else { 0.0 }).unwrap();
        assert_eq!(right, 0.75);
        let root = snapshot(&[0.0], 0.0);
        assert_eq!(empirical_scaled_sum(&root, &p, |_| 1.0), 1.0);
        let f = |x: f64| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 };
        let ratio = empirical_scaled_sum(&s, &p, f) / empirical_scaled_sum(&s, &p, |_| 1.0);
        assert!((ratio - empirical_slln_ratio(&s, f).unwrap()).abs() < 1e-15);
        assert!(empirical_slln_ratio(&snapshot(&[], 1.0), f).is_err());
    }

    proptest! {
        #[test]
        fn fit_is_affine_equivariant(
            ys in prop::collection::vec(-50.0f64..50.0, 5..30),
            c in -3.0f64..3.0,
        ) {
            let t: Vec<f64> = (0..ys.len()).map(|i| 10.0 + i as f64 * 0.5).collect();
            let base = fit_log_rate(&t, &ys).unwrap();
            let shifted: Vec<f64> = t.iter().zip(&ys).map(|(&s, &y)| y + c * s).collect();
            let moved = fit_log_rate(&t, &shifted).unwrap();
            prop_assert!((moved.slope - base.slope - c).abs() < 1e-9);
        }

        #[test]
        fn ks_invariant_under_monotone_maps(seed in 0u64..1000) {
            let xs: Vec<f64> = (0..200)
                .map(|i| (((i as u64 + 1) * 2654435761 + seed) % 10007) as f64 / 10007.0)
                .collect();
            let a = ks_statistic(&xs, |x| x).unwrap();
            let mapped: Vec<f64> = xs.iter().map(|x| x.powi(3) * 5.0 - 2.0).collect();
            let b = ks_statistic(&mapped, |y| ((y + 2.0) / 5.0).cbrt()).unwrap();
            prop_assert!((a.d - b.d).abs() < 1e-12);
        }

        #[test]
        fn slln_ratio_within_range_of_f(xs in prop::collection::vec(-20.0f64..20.0, 1..60)) {
            let f = |x: f64| (x * 0.7).sin();
            let s = snapshot(&xs, 1.0);
            let r = empirical_slln_ratio(&s, f).unwrap();
            let lo = xs.iter().map(|&x| f(x)).fold(f64::INFINITY, f64::min);
            let hi = xs.iter().map(|&x| f(x)).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
        }
    }
}
