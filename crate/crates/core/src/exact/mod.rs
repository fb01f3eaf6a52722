//! Exact expectations over finite-support distributions.
//!
//! `E{g(Z₁, …, Z_m)}` for independent `Z_i` with finite support is a finite
//! weighted sum over the product of the supports. The engine enumerates that
//! product with an odometer, accumulates each outer-index slice with
//! compensated summation and merges the slices in index order, so the result
//! does not depend on how the outer loop is scheduled across threads.

mod catalog;

pub use catalog::{
    Comparison, IdentityId, IdentityInput, IdentityReport, Relation, DEFAULT_TOLERANCE,
};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::NeumaierSum;

/// Default cap on the number of enumerated product states.
pub const ENUMERATION_CAP: u64 = 10_000_000;

/// A univariate distribution with finitely many support points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFinite", into = "RawFinite")]
pub struct FiniteDistribution {
    support: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawFinite {
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<RawFinite> for FiniteDistribution {
    type Error = Error;

    fn try_from(raw: RawFinite) -> Result<Self> {
        FiniteDistribution::new(raw.support, raw.weights)
    }
}

impl From<FiniteDistribution> for RawFinite {
    fn from(d: FiniteDistribution) -> Self {
        RawFinite { support: d.support, weights: d.weights }
    }
}

impl FiniteDistribution {
    /// Builds a normalized distribution. Duplicate support points are merged
    /// (first occurrence keeps its position) and zero-weight points dropped.
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let rows: Vec<Vec<f64>> = support.into_iter().map(|x| vec![x]).collect();
        let joint = FiniteJoint::new(1, rows, weights)?;
        Ok(Self { support: joint.points, weights: joint.weights })
    }

    pub fn point_mass(x: f64) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    /// Equal weights on the given points.
    pub fn uniform(points: &[f64]) -> Result<Self> {
        Self::new(points.to_vec(), vec![1.0; points.len()])
    }

    /// The empirical distribution of a data vector: mass `1/n` on each
    /// observation.
    pub fn empirical(data: &[f64]) -> Result<Self> {
        Self::uniform(data)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.expect1(|x| x)
    }

    /// `Σ w_i f(x_i)`.
    pub fn expect1(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum::<NeumaierSum>()
            .value()
    }

    /// `μ_k = Σ w_i (x_i − μ)^k`.
    pub fn central_moment(&self, k: u32) -> f64 {
        let mu = self.mean();
        self.expect1(|x| (x - mu).powi(k as i32))
    }

    pub fn variance(&self) -> f64 {
        self.central_moment(2)
    }

    pub fn to_joint(&self) -> FiniteJoint {
        FiniteJoint { dim: 1, points: self.support.clone(), weights: self.weights.clone() }
    }

    /// Applies `f` to every support point.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.support.iter().map(|&x| f(x)).collect(), self.weights.clone())
    }
}

/// `μ_k` of a finite distribution, computed from its exact mean.
pub fn central_moment_exact(dist: &FiniteDistribution, k: u32) -> f64 {
    dist.central_moment(k)
}

/// A finite-support distribution on `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJoint {
    dim: usize,
    /// Row-major, `len × dim`.
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl FiniteJoint {
    pub fn new(dim: usize, support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDistribution("dimension must be positive".into()));
        }
        if support.len() != weights.len() {
            return Err(Error::LengthMismatch(support.len(), weights.len()));
        }
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let mut points: Vec<f64> = Vec::with_capacity(support.len() * dim);
        let mut merged: Vec<f64> = Vec::with_capacity(support.len());
        for (i, (row, &w)) in support.iter().zip(&weights).enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidDistribution(format!(
                    "support point {i} has dimension {}, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(i));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidDistribution(format!("weight {i} is negative or non-finite")));
            }
            if w == 0.0 {
                continue;
            }
            match points.chunks_exact(dim).position(|p| p == row.as_slice()) {
                Some(j) => merged[j] += w,
                None => {
                    points.extend_from_slice(row);
                    merged.push(w);
                }
            }
        }
        let total: f64 = merged.iter().copied().sum::<NeumaierSum>().value();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        for w in &mut merged {
            *w /= total;
        }
        Ok(Self { dim, points, weights: merged })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rows(&self) -> Vec<&[f64]> {
        self.points.chunks_exact(self.dim).collect()
    }

    pub fn marginal(&self, col: usize) -> Result<FiniteDistribution> {
        self.require_dim(col + 1)?;
        let support = self.points.chunks_exact(self.dim).map(|p| p[col]).collect();
        FiniteDistribution::new(support, self.weights.clone())
    }

    /// Keeps the listed columns, in order.
    pub fn project(&self, cols: &[usize]) -> Result<Self> {
        let max = cols.iter().copied().max().unwrap_or(0);
        self.require_dim(max + 1)?;
        let support = self.rows().iter().map(|p| cols.iter().map(|&c| p[c]).collect()).collect();
        Self::new(cols.len(), support, self.weights.clone())
    }

    /// Applies `f` to every support point; `f` must preserve dimension.
    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let support = self.rows().into_iter().map(f).collect();
        Self::new(self.dim, support, self.weights.clone())
    }

    /// `Σ w_i f(z_i)`.
    pub fn expect1(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points
            .chunks_exact(self.dim)
            .zip(&self.weights)
            .map(|(p, &w)| w * f(p))
            .sum::<NeumaierSum>()
            .value()
    }

    pub fn mean(&self, col: usize) -> f64 {
        self.expect1(|p| p[col])
    }

    /// Centered covariance between two columns.
    pub fn covariance(&self, a: usize, b: usize) -> f64 {
        let (ma, mb) = (self.mean(a), self.mean(b));
        self.expect1(|p| (p[a] - ma) * (p[b] - mb))
    }

    pub(crate) fn require_dim(&self, needed: usize) -> Result<()> {
        if self.dim < needed {
            return Err(Error::InvalidDistribution(format!(
                "needs dimension {needed}, distribution has {}",
                self.dim
            )));
        }
        Ok(())
    }

    /// Random distribution with `size` support points drawn uniformly from
    /// `[−2, 2]^dim` and weights drawn uniformly from the simplex.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, size: usize, dim: usize) -> Self {
        let support = (0..size)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..=2.0)).collect())
            .collect();
        // Normalized i.i.d. Exp(1) draws are uniform on the simplex.
        let weights = (0..size).map(|_| -(1.0 - rng.random::<f64>()).ln() + f64::MIN_POSITIVE).collect();
        Self::new(dim, support, weights).expect("random draws are finite with positive weights")
    }
}

impl From<&FiniteDistribution> for FiniteJoint {
    fn from(d: &FiniteDistribution) -> Self {
        d.to_joint()
    }
}

/// One factor of a product space: support points with their weights.
#[derive(Debug, Clone, Copy)]
pub struct Factor<'a, P> {
    pub points: &'a [P],
    pub weights: &'a [f64],
}

/// Enumeration engine with a configurable state cap.
#[derive(Debug, Clone, Copy)]
pub struct ExactEngine {
    pub cap: u64,
}

impl Default for ExactEngine {
    fn default() -> Self {
        Self { cap: ENUMERATION_CAP }
    }
}

impl ExactEngine {
    pub fn with_cap(cap: u64) -> Self {
        Self { cap }
    }

    /// Fails when the product of factor sizes exceeds the cap.
    pub fn check_states(&self, sizes: impl IntoIterator<Item = usize>) -> Result<()> {
        let states: f64 = sizes.into_iter().map(|s| s as f64).product();
        if states > self.cap as f64 {
            return Err(Error::EnumerationCap { states, cap: self.cap });
        }
        Ok(())
    }

    /// `E{g(Z₁, …, Z_m)}` for independent `Z_i` with the given factors.
    pub fn expect_product<P, G>(&self, factors: &[Factor<'_, P>], g: G) -> Result<f64>
    where
        P: Copy + Send + Sync,
        G: Fn(&[P]) -> f64 + Sync,
    {
        if factors.is_empty() {
            return Err(Error::Arity { expected: 1, got: 0 });
        }
        self.check_states(factors.iter().map(|f| f.points.len()))?;
        let partials: Vec<NeumaierSum> = (0..factors[0].points.len())
            .into_par_iter()
            .map(|first| slice_sum(factors, first, &g))
            .collect();
        let mut total = NeumaierSum::new();
        for part in &partials {
            total.merge(part);
        }
        Ok(total.value())
    }

    /// `E{g(X₁, …, X_m)}` for `m` i.i.d. replications of a univariate `dist`.
    pub fn expect_iid<G>(&self, dist: &FiniteDistribution, m: usize, g: G) -> Result<f64>
    where
        G: Fn(&[f64]) -> f64 + Sync,
    {
        let factor = Factor { points: dist.support(), weights: dist.weights() };
        self.expect_product(&vec![factor; m], g)
    }

    /// `E{g(Z₁, …, Z_m)}` for independent multivariate `Z_i ~ dists[i]`.
    pub fn expect_joint<G>(&self, dists: &[&FiniteJoint], g: G) -> Result<f64>
    where
        G: Fn(&[&[f64]]) -> f64 + Sync,
    {
        let rows: Vec<Vec<&[f64]>> = dists.iter().map(|d| d.rows()).collect();
        let factors: Vec<Factor<'_, &[f64]>> = rows
            .iter()
            .zip(dists)
            .map(|(r, d)| Factor { points: r.as_slice(), weights: d.weights() })
            .collect();
        self.expect_product(&factors, g)
    }

    /// `E{g(Z₁, …, Z_m)}` for `m` i.i.d. replications of a joint distribution.
    pub fn expect_joint_iid<G>(&self, dist: &FiniteJoint, m: usize, g: G) -> Result<f64>
    where
        G: Fn(&[&[f64]]) -> f64 + Sync,
    {
        self.expect_joint(&vec![dist; m], g)
    }
}

/// Compensated sum over all states whose first index is `first`.
fn slice_sum<P, G>(factors: &[Factor<'_, P>], first: usize, g: &G) -> NeumaierSum
where
    P: Copy,
    G: Fn(&[P]) -> f64,
{
    let m = factors.len();
    let mut idx = vec![0usize; m];
    idx[0] = first;
    let mut args: Vec<P> = factors.iter().map(|f| f.points[0]).collect();
    args[0] = factors[0].points[first];
    // prefix[i] = product of the weights of positions 0..=i
    let mut prefix = vec![0.0; m];
    prefix[0] = factors[0].weights[first];
    for i in 1..m {
        prefix[i] = prefix[i - 1] * factors[i].weights[0];
    }
    let mut acc = NeumaierSum::new();
    loop {
        acc.add(prefix[m - 1] * g(&args));
        let mut pos = m - 1;
        loop {
            if pos == 0 {
                return acc;
            }
            idx[pos] += 1;
            if idx[pos] < factors[pos].points.len() {
                break;
            }
            idx[pos] = 0;
            args[pos] = factors[pos].points[0];
            pos -= 1;
        }
        args[pos] = factors[pos].points[idx[pos]];
        for i in pos..m {
            prefix[i] = prefix[i - 1] * factors[i].weights[idx[i]];
        }
    }
}

/// `E{g(X₁, …, X_m)}` with the default cap.
pub fn expect_iid<G>(dist: &FiniteDistribution, m: usize, g: G) -> Result<f64>
where
    G: Fn(&[f64]) -> f64 + Sync,
{
    ExactEngine::default().expect_iid(dist, m, g)
}

/// Checks `E{(X₁−X₂)^j} = 0` for every odd `j ≤ max_odd_order`.
///
/// The comparison scale for order `j` is `max(1, E|X₁−X₂|^j)`, the size of the
/// terms that cancel.
pub fn odd_moment_symmetry_check(
    dist: &FiniteDistribution,
    max_odd_order: u32,
    tolerance: f64,
) -> Result<IdentityReport> {
    let engine = ExactEngine::default();
    let mut comparisons = Vec::new();
    for j in (1..=max_odd_order).step_by(2) {
        let value = engine.expect_iid(dist, 2, |x| (x[0] - x[1]).powi(j as i32))?;
        let scale = engine.expect_iid(dist, 2, |x| (x[0] - x[1]).abs().powi(j as i32))?;
        comparisons.push(Comparison::equal_scaled(format!("E(X1-X2)^{j}"), value, 0.0, scale, tolerance));
    }
    Ok(IdentityReport { name: "odd-difference-moments".into(), tolerance, comparisons })
}
