//! Sample-level moment estimators.
//!
//! D-estimators average an unbiased kernel over index tuples of *distinct*
//! observations. Because `h_k` is not symmetric in its arguments, tuples are
//! ordered: averaging over every ordering symmetrizes the kernel, which turns
//! the exhaustive D-estimator into a U-statistic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{h_unchecked, KernelOrder};
use crate::rng::RngStream;
use crate::sum::NeumaierSum;

/// Default cap on the number of ordered tuples the exhaustive estimator visits.
pub const TUPLE_CAP: u64 = 100_000_000;

/// Agreement required between the algebraic and pairwise routes.
pub const ROUTE_TOLERANCE: f64 = 1e-10;

/// Observations `x₁, …, x_n` with `n ≥ 2`, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::SampleTooSmall { needed: 2, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn require(&self, needed: usize) -> Result<()> {
        if self.len() < needed {
            return Err(Error::SampleTooSmall { needed, got: self.len() });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Sample::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EstimatorKind {
    Natural,
    DExhaustive,
    DMonteCarlo { tuples: u64 },
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub estimator: EstimatorKind,
    pub order: usize,
    pub value: f64,
    pub tuples_used: u64,
    /// Present only for Monte Carlo D-estimates.
    pub mc_std_error: Option<f64>,
}

/// Divisor of the natural estimator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NaturalDivisor {
    /// `1/(n−1)`: unbiased at order two.
    #[default]
    NMinusOne,
    N,
}

/// Mean computed about `x[0]`, so constant data give their value exactly.
fn mean(x: &[f64]) -> f64 {
    let c = x[0];
    c + x.iter().map(|v| v - c).sum::<NeumaierSum>().value() / x.len() as f64
}

/// `Σ (x_i − x̄)^k` with compensated summation.
fn centered_power_sum(x: &[f64], k: i32) -> f64 {
    let m = mean(x);
    x.iter().map(|&v| (v - m).powi(k)).sum::<NeumaierSum>().value()
}

/// Natural estimator `m̂_k(n) = Σ(x_i − x̄)^k / (n−1)` on a raw slice.
pub(crate) fn natural_raw(x: &[f64], k: usize, divisor: NaturalDivisor) -> f64 {
    let n = x.len() as f64;
    let d = match divisor {
        NaturalDivisor::NMinusOne => n - 1.0,
        NaturalDivisor::N => n,
    };
    centered_power_sum(x, k as i32) / d
}

/// `m̂_k(n) = (1/(n−1)) Σ (X_i − X̄_n)^k`.
pub fn natural_moment(sample: &Sample, k: usize) -> Result<MomentEstimate> {
    natural_moment_with(sample, k, NaturalDivisor::NMinusOne)
}

pub fn natural_moment_with(sample: &Sample, k: usize, divisor: NaturalDivisor) -> Result<MomentEstimate> {
    if k == 0 {
        return Err(Error::OrderOutOfRange { order: 0, min: 1, max: usize::MAX });
    }
    Ok(MomentEstimate {
        estimator: EstimatorKind::Natural,
        order: k,
        value: natural_raw(sample.values(), k, divisor),
        tuples_used: sample.len() as u64,
        mc_std_error: None,
    })
}

/// `n!/(n−k)!`, saturating.
pub fn ordered_tuple_count(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    ((n - k + 1)..=n).fold(1u64, |acc, v| acc.saturating_mul(v as u64))
}

/// Mean of `h_k` over all ordered `k`-tuples of distinct indices.
pub fn d_estimator_exhaustive(sample: &Sample, k: usize) -> Result<MomentEstimate> {
    d_estimator_exhaustive_capped(sample, k, TUPLE_CAP)
}

pub fn d_estimator_exhaustive_capped(sample: &Sample, k: usize, cap: u64) -> Result<MomentEstimate> {
    KernelOrder::new(k)?;
    sample.require(k)?;
    let count = ordered_tuple_count(sample.len(), k);
    if count > cap {
        return Err(Error::EnumerationCap { states: count as f64, cap });
    }
    let mut walk = TupleWalk {
        x: sample.values(),
        k,
        used: vec![false; sample.len()],
        buf: Vec::with_capacity(k),
        acc: NeumaierSum::new(),
    };
    walk.descend();
    Ok(MomentEstimate {
        estimator: EstimatorKind::DExhaustive,
        order: k,
        value: walk.acc.value() / count as f64,
        tuples_used: count,
        mc_std_error: None,
    })
}

/// Depth-first walk over ordered tuples of distinct indices.
struct TupleWalk<'a> {
    x: &'a [f64],
    k: usize,
    used: Vec<bool>,
    buf: Vec<f64>,
    acc: NeumaierSum,
}

impl TupleWalk<'_> {
    fn descend(&mut self) {
        if self.buf.len() == self.k {
            self.acc.add(h_unchecked(&self.buf));
            return;
        }
        for i in 0..self.x.len() {
            if self.used[i] {
                continue;
            }
            self.used[i] = true;
            self.buf.push(self.x[i]);
            self.descend();
            self.buf.pop();
            self.used[i] = false;
        }
    }
}

/// Mean of `h_k` over `tuples` index tuples drawn i.i.d. from the uniform
/// distribution on ordered tuples of distinct indices.
pub fn d_estimator_mc(sample: &Sample, k: usize, tuples: u64, stream: RngStream) -> Result<MomentEstimate> {
    KernelOrder::new(k)?;
    sample.require(k)?;
    if tuples == 0 {
        return Err(Error::Config("Monte Carlo D-estimator needs at least one tuple".into()));
    }
    let (value, se) = mc_raw(sample.values(), k, tuples, &mut stream.rng());
    Ok(MomentEstimate {
        estimator: EstimatorKind::DMonteCarlo { tuples },
        order: k,
        value,
        tuples_used: tuples,
        mc_std_error: Some(se),
    })
}

/// Returns `(mean, std_error)` of the kernel values. Caller validates `k ≤ n`.
pub(crate) fn mc_raw<R: Rng + ?Sized>(x: &[f64], k: usize, tuples: u64, rng: &mut R) -> (f64, f64) {
    let n = x.len();
    let mut idx = [0usize; crate::kernels::K_MAX];
    let mut args = [0.0f64; crate::kernels::K_MAX];
    // Welford running mean and sum of squared deviations.
    let mut count = 0u64;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for _ in 0..tuples {
        for i in 0..k {
            let j = loop {
                let j = rng.random_range(0..n);
                if !idx[..i].contains(&j) {
                    break j;
                }
            };
            idx[i] = j;
            args[i] = x[j];
        }
        let v = h_unchecked(&args[..k]);
        count += 1;
        let delta = v - mean;
        mean += delta / count as f64;
        m2 += delta * (v - mean);
    }
    let se = if count > 1 { (m2 / (count - 1) as f64).sqrt() / (count as f64).sqrt() } else { 0.0 };
    (mean, se)
}

/// Gini variance `s²_X(n)`: `(n Σd² − (Σd)²) / (n(n−1))` with `d = x − x₁`.
pub fn gini_variance(sample: &Sample) -> f64 {
    gini_covariance_raw(sample.values(), sample.values())
}

/// Gini covariance `s_XY(n)` by the O(n) shifted-sums route.
pub fn gini_covariance(x: &Sample, y: &Sample) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    Ok(gini_covariance_raw(x.values(), y.values()))
}

fn gini_covariance_raw(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (cx, cy) = (x[0], y[0]);
    let mut sx = NeumaierSum::new();
    let mut sy = NeumaierSum::new();
    let mut sxy = NeumaierSum::new();
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - cx, b - cy);
        sx.add(da);
        sy.add(db);
        sxy.add(da * db);
    }
    (n * sxy.value() - sx.value() * sy.value()) / (n * (n - 1.0))
}

/// `½ · 1/(n(n−1)) ΣΣ (x_i−x_j)²` summed over `i < j` (O(n²)).
pub fn gini_variance_pairwise(sample: &Sample) -> f64 {
    gini_covariance_pairwise_raw(sample.values(), sample.values())
}

/// `1/(n(n−1)) Σ_{i<j} (x_i−x_j)(y_i−y_j)` (O(n²)).
pub fn gini_covariance_pairwise(x: &Sample, y: &Sample) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    Ok(gini_covariance_pairwise_raw(x.values(), y.values()))
}

fn gini_covariance_pairwise_raw(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut acc = NeumaierSum::new();
    for i in 0..n {
        for j in (i + 1)..n {
            acc.add((x[i] - x[j]) * (y[i] - y[j]));
        }
    }
    acc.value() / (n * (n - 1)) as f64
}

fn routes_agree(what: &'static str, fast: f64, slow: f64) -> Result<f64> {
    let scale = 1f64.max(fast.abs()).max(slow.abs());
    if (fast - slow).abs() > ROUTE_TOLERANCE * scale {
        return Err(Error::RouteMismatch { what, fast, slow });
    }
    Ok(fast)
}

/// Gini variance computed by both routes; errors if they disagree.
pub fn gini_variance_verified(sample: &Sample) -> Result<f64> {
    routes_agree("gini variance", gini_variance(sample), gini_variance_pairwise(sample))
}

pub fn gini_covariance_verified(x: &Sample, y: &Sample) -> Result<f64> {
    routes_agree("gini covariance", gini_covariance(x, y)?, gini_covariance_pairwise(x, y)?)
}

/// The Gini variance as an order-2 estimate.
pub fn pairwise_variance_estimate(sample: &Sample) -> MomentEstimate {
    let n = sample.len() as u64;
    MomentEstimate {
        estimator: EstimatorKind::Pairwise,
        order: 2,
        value: gini_variance(sample),
        tuples_used: n * (n - 1) / 2,
        mc_std_error: None,
    }
}

/// Regression slope of y on x, `s_XY / s²_X`.
pub fn regression_beta(x: &Sample, y: &Sample) -> Result<f64> {
    let cov = gini_covariance(x, y)?;
    let var = gini_variance(x);
    if var <= 0.0 {
        return Err(Error::Degenerate("x has zero variance"));
    }
    Ok(cov / var)
}

/// Averages of pairwise-difference powers over distinct ordered tuples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseAverages {
    /// `avg (x_i − x_j)²` over ordered pairs.
    pub sq: f64,
    /// `avg (x_i − x_l)(x_i − x_j)²` over ordered triples; `None` when `n < 3`.
    pub triple: Option<f64>,
    /// `avg (x_i − x_j)⁴` over ordered pairs.
    pub quartic: f64,
}

/// O(n) evaluation from centered power sums `S_p = Σ d_i^p`, `d = x − x̄`:
///
/// ```text
/// Σ_{i≠j} (d_i−d_j)²               = 2n S₂ − 2 S₁²
/// Σ_{i≠j} (d_i−d_j)⁴               = 2n S₄ − 8 S₁ S₃ + 6 S₂²
/// Σ_{i,j,l distinct} (d_i−d_l)(d_i−d_j)² = n² S₃ − 3n S₁ S₂ + 2 S₁³
/// ```
///
/// `S₁` is zero up to rounding; keeping it makes the sums exact in `d`.
pub fn pairwise_averages(sample: &Sample) -> PairwiseAverages {
    let x = sample.values();
    let n = x.len() as f64;
    let m = mean(x);
    let mut s = [NeumaierSum::new(); 5];
    for &v in x {
        let d = v - m;
        let mut p = d;
        for acc in s.iter_mut().skip(1) {
            acc.add(p);
            p *= d;
        }
    }
    let [_, s1, s2, s3, s4] = s.map(|a| a.value());
    let pairs = n * (n - 1.0);
    let sq = (2.0 * n * s2 - 2.0 * s1 * s1) / pairs;
    let quartic = (2.0 * n * s4 - 8.0 * s1 * s3 + 6.0 * s2 * s2) / pairs;
    let triple = (x.len() >= 3).then(|| (n * n * s3 - 3.0 * n * s1 * s2 + 2.0 * s1 * s1 * s1) / (pairs * (n - 2.0)));
    PairwiseAverages { sq, triple, quartic }
}

/// The same averages by direct enumeration (O(n³)); for verification.
pub fn pairwise_averages_enumerated(sample: &Sample) -> PairwiseAverages {
    let x = sample.values();
    let n = x.len();
    let mut sq = NeumaierSum::new();
    let mut quartic = NeumaierSum::new();
    let mut triple = NeumaierSum::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = x[i] - x[j];
            sq.add(d * d);
            quartic.add(d * d * d * d);
            for l in 0..n {
                if l != i && l != j {
                    triple.add((x[i] - x[l]) * d * d);
                }
            }
        }
    }
    let pairs = (n * (n - 1)) as f64;
    PairwiseAverages {
        sq: sq.value() / pairs,
        triple: (n >= 3).then(|| triple.value() / (pairs * (n - 2) as f64)),
        quartic: quartic.value() / pairs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewKurt {
    pub skewness: f64,
    /// Pearson kurtosis.
    pub kurtosis: f64,
    pub excess_kurtosis: f64,
}

fn kurtosis_from(avg: &PairwiseAverages) -> Result<f64> {
    if avg.sq <= 0.0 {
        return Err(Error::Degenerate("sample has zero pairwise variance"));
    }
    Ok(2.0 * avg.quartic / (avg.sq * avg.sq) - 3.0)
}

/// Plug-in skewness `√8·avg[(x_i−x_l)(x_i−x_j)²] / avg[(x_i−x_j)²]^{3/2}` and
/// kurtosis `2·avg[(x_i−x_j)⁴] / avg[(x_i−x_j)²]² − 3`.
///
/// These are ratios of unbiased averages and are not themselves unbiased.
pub fn skewness_kurtosis_d(sample: &Sample) -> Result<SkewKurt> {
    sample.require(3)?;
    skew_kurt_from(&pairwise_averages(sample))
}

/// Same statistics from the enumerated averages.
pub fn skewness_kurtosis_d_enumerated(sample: &Sample) -> Result<SkewKurt> {
    sample.require(3)?;
    skew_kurt_from(&pairwise_averages_enumerated(sample))
}

fn skew_kurt_from(avg: &PairwiseAverages) -> Result<SkewKurt> {
    let kurtosis = kurtosis_from(avg)?;
    let triple = avg.triple.expect("n ≥ 3 checked by caller");
    Ok(SkewKurt {
        skewness: 8f64.sqrt() * triple / avg.sq.powf(1.5),
        kurtosis,
        excess_kurtosis: kurtosis - 3.0,
    })
}

/// Pearson kurtosis alone; needs only `n ≥ 2`.
pub fn kurtosis_d(sample: &Sample) -> Result<f64> {
    kurtosis_from(&pairwise_averages(sample))
}
