//! Finite summation identities on real vectors.
//!
//! Every check evaluates both sides from scratch, so neither side borrows an
//! intermediate result from the other. Pairwise sides sum over `i < j` by
//! default; [`Summation::Full`] sums the full double sum and halves it.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{Comparison, IdentityReport, DEFAULT_TOLERANCE};
use crate::sum::NeumaierSum;

/// Lower bound accepted for `(Σx²)(Σy²) − (Σxy)²`.
pub const CAUCHY_SCHWARZ_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Summation {
    #[default]
    Triangular,
    Full,
}

/// `Σ_{i<j} f(i, j)`, or `½ Σ_{i≠j} f(i, j)` for symmetric `f`.
fn pair_sum(n: usize, mode: Summation, f: impl Fn(usize, usize) -> f64) -> f64 {
    let mut acc = NeumaierSum::new();
    match mode {
        Summation::Triangular => {
            for i in 0..n {
                for j in (i + 1)..n {
                    acc.add(f(i, j));
                }
            }
            acc.value()
        }
        Summation::Full => {
            for i in 0..n {
                for j in 0..n {
                    acc.add(f(i, j));
                }
            }
            0.5 * acc.value()
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<NeumaierSum>().value()
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

fn same_len(vs: &[&[f64]]) -> Result<()> {
    let n = vs[0].len();
    for v in vs {
        if v.len() != n {
            return Err(Error::LengthMismatch(n, v.len()));
        }
        check_finite(v)?;
    }
    Ok(())
}

fn report(name: &str, comparisons: Vec<Comparison>) -> IdentityReport {
    IdentityReport { name: name.into(), tolerance: DEFAULT_TOLERANCE, comparisons }
}

pub fn check_gini_variance(x: &[f64]) -> Result<IdentityReport> {
    check_gini_variance_with(x, Summation::Triangular)
}

/// `Σ(x_i − x̄)²/(n−1)` against `1/(n(n−1)) Σ_{i<j}(x_i − x_j)²`.
pub fn check_gini_variance_with(x: &[f64], mode: Summation) -> Result<IdentityReport> {
    let mut r = check_gini_covariance_with(x, x, mode)?;
    r.name = "gini-variance".into();
    Ok(r)
}

pub fn check_gini_covariance(x: &[f64], y: &[f64]) -> Result<IdentityReport> {
    check_gini_covariance_with(x, y, Summation::Triangular)
}

/// `Σ(x_i − x̄)(y_i − ȳ)/(n−1)` against `1/(n(n−1)) Σ_{i<j}(x_i − x_j)(y_i − y_j)`.
pub fn check_gini_covariance_with(x: &[f64], y: &[f64], mode: Summation) -> Result<IdentityReport> {
    same_len(&[x, y])?;
    let n = x.len();
    if n < 2 {
        return Err(Error::SampleTooSmall { needed: 2, got: n });
    }
    let nf = n as f64;
    let mx = x.iter().copied().sum::<NeumaierSum>().value() / nf;
    let my = y.iter().copied().sum::<NeumaierSum>().value() / nf;
    let centered = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<NeumaierSum>().value() / (nf - 1.0);
    let pairwise = pair_sum(n, mode, |i, j| (x[i] - x[j]) * (y[i] - y[j])) / (nf * (nf - 1.0));
    Ok(report("gini-covariance", vec![Comparison::equal("centered = pairwise", centered, pairwise, DEFAULT_TOLERANCE)]))
}

pub fn check_lagrange(x: &[f64], y: &[f64]) -> Result<IdentityReport> {
    check_lagrange_with(x, y, Summation::Triangular)
}

/// `(Σx²)(Σy²) − (Σxy)²` against `Σ_{i<j}(x_i y_j − x_j y_i)²`, plus the
/// Cauchy–Schwarz bound on the left side.
pub fn check_lagrange_with(x: &[f64], y: &[f64], mode: Summation) -> Result<IdentityReport> {
    same_len(&[x, y])?;
    if x.is_empty() {
        return Err(Error::SampleTooSmall { needed: 1, got: 0 });
    }
    let lhs = dot(x, x) * dot(y, y) - dot(x, y).powi(2);
    let rhs = pair_sum(x.len(), mode, |i, j| (x[i] * y[j] - x[j] * y[i]).powi(2));
    Ok(report(
        "lagrange",
        vec![
            Comparison::equal("lhs = rhs", lhs, rhs, DEFAULT_TOLERANCE),
            Comparison::at_least("lhs >= 0", lhs, 0.0, CAUCHY_SCHWARZ_SLACK),
        ],
    ))
}

pub fn check_binet_cauchy(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<IdentityReport> {
    check_binet_cauchy_with(a, b, c, d, Summation::Triangular)
}

/// `(Σac)(Σbd) − (Σad)(Σbc)` against `Σ_{i<j}(a_i b_j − a_j b_i)(c_i d_j − c_j d_i)`.
pub fn check_binet_cauchy_with(a: &[f64], b: &[f64], c: &[f64], d: &[f64], mode: Summation) -> Result<IdentityReport> {
    same_len(&[a, b, c, d])?;
    if a.is_empty() {
        return Err(Error::SampleTooSmall { needed: 1, got: 0 });
    }
    let lhs = dot(a, c) * dot(b, d) - dot(a, d) * dot(b, c);
    let rhs = pair_sum(a.len(), mode, |i, j| (a[i] * b[j] - a[j] * b[i]) * (c[i] * d[j] - c[j] * d[i]));
    Ok(report("binet-cauchy", vec![Comparison::equal("lhs = rhs", lhs, rhs, DEFAULT_TOLERANCE)]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumericIdentity {
    GiniVariance,
    GiniCovariance,
    Lagrange,
    BinetCauchy,
}

impl NumericIdentity {
    pub const ALL: [NumericIdentity; 4] =
        [Self::GiniVariance, Self::GiniCovariance, Self::Lagrange, Self::BinetCauchy];

    pub fn name(self) -> &'static str {
        match self {
            Self::GiniVariance => "gini-variance",
            Self::GiniCovariance => "gini-covariance",
            Self::Lagrange => "lagrange",
            Self::BinetCauchy => "binet-cauchy",
        }
    }

    /// Runs the check on fresh vectors of length `n` with entries uniform on `[−10, 10]`.
    pub fn check_random<R: Rng + ?Sized>(self, rng: &mut R, n: usize) -> Result<IdentityReport> {
        let mut v = || -> Vec<f64> { (0..n).map(|_| rng.random_range(-10.0..=10.0)).collect() };
        match self {
            Self::GiniVariance => check_gini_variance(&v()),
            Self::GiniCovariance => check_gini_covariance(&v(), &v()),
            Self::Lagrange => check_lagrange(&v(), &v()),
            Self::BinetCauchy => check_binet_cauchy(&v(), &v(), &v(), &v()),
        }
    }
}

impl FromStr for NumericIdentity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownIdentity(s.to_string()))
    }
}

impl std::fmt::Display for NumericIdentity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn both(r: &IdentityReport) -> (f64, f64) {
        (r.comparisons[0].lhs, r.comparisons[0].rhs)
    }

    #[test]
    fn gini_examples() {
        let r = check_gini_variance(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(both(&r), (1.0, 1.0));
        assert_eq!(both(&check_gini_variance(&[4.0; 6]).unwrap()), (0.0, 0.0));
        assert!(check_gini_variance(&[1.0]).is_err());

        let r = check_gini_covariance(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert_eq!(both(&r), (-0.5, -0.5));
        let (l, rr) = both(&check_gini_covariance(&[1.0, 5.0, -2.0], &[3.0; 3]).unwrap());
        assert_eq!((l, rr), (0.0, 0.0));
        assert!(check_gini_covariance(&[1.0, 2.0], &[1.0]).is_err());
        assert!(check_gini_covariance(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn covariance_with_itself_is_variance() {
        let x = [0.3, -2.0, 7.5, 1.25, 4.0];
        assert_eq!(both(&check_gini_covariance(&x, &x).unwrap()), both(&check_gini_variance(&x).unwrap()));
    }

    #[test]
    fn lagrange_examples() {
        let x = [1.0, -2.0, 0.5, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let r = check_lagrange(&x, &y).unwrap();
        assert!(r.passed());
        assert!(r.comparisons[0].lhs.abs() < 1e-12 && r.comparisons[0].rhs.abs() < 1e-12);

        let r = check_lagrange(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(both(&r), (1.0, 1.0));
        assert!(check_lagrange(&[], &[]).is_err());
    }

    #[test]
    fn binet_cauchy_examples() {
        let a = [1.0, 2.5, -3.0];
        let b = [0.5, -1.0, 2.0];
        let bc = check_binet_cauchy(&a, &b, &a, &b).unwrap();
        let lg = check_lagrange(&a, &b).unwrap();
        assert_eq!(both(&bc), both(&lg));

        let r = check_binet_cauchy(&a, &b, &[1.0, 1.0, 1.0], &[0.0; 3]).unwrap();
        assert_eq!(both(&r), (0.0, 0.0));
    }

    #[test]
    fn full_and_triangular_agree() {
        let mut rng = RngStream::new(11, 0).rng();
        let v = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> { (0..40).map(|_| rng.random_range(-10.0..10.0)).collect() };
        let (a, b, c, d) = (v(&mut rng), v(&mut rng), v(&mut rng), v(&mut rng));
        for mode in [Summation::Triangular, Summation::Full] {
            assert!(check_gini_variance_with(&a, mode).unwrap().passed());
            assert!(check_gini_covariance_with(&a, &b, mode).unwrap().passed());
            assert!(check_lagrange_with(&a, &b, mode).unwrap().passed());
            assert!(check_binet_cauchy_with(&a, &b, &c, &d, mode).unwrap().passed());
        }
        let t = both(&check_lagrange_with(&a, &b, Summation::Triangular).unwrap()).1;
        let f = both(&check_lagrange_with(&a, &b, Summation::Full).unwrap()).1;
        assert!((t - f).abs() <= 1e-12 * t.abs());
    }

    #[test]
    fn variance_scales_quadratically() {
        let x = [0.3, -2.0, 7.5, 1.25, 4.0];
        let lambda = 3.5;
        let y: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        let (l0, r0) = both(&check_gini_variance(&x).unwrap());
        let (l1, r1) = both(&check_gini_variance(&y).unwrap());
        assert!((l1 / l0 - lambda * lambda).abs() < 1e-12);
        assert!((r1 / r0 - lambda * lambda).abs() < 1e-12);
    }

    #[test]
    fn names_parse() {
        for id in NumericIdentity::ALL {
            assert_eq!(id.name().parse::<NumericIdentity>().unwrap(), id);
        }
        assert!("nope".parse::<NumericIdentity>().is_err());
    }
}
