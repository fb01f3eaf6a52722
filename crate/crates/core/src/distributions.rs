//! Sampling distributions with closed-form central moments.
//!
//! `Exponential(λ)` is parameterised by its rate, so `exp:2` has mean `1/2`.
//! Its central moments are `μ_k = D(k)/λ^k`, where `D(k)` counts the
//! fixed-point-free permutations of `k` items.

use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{central_moment_exact, FiniteDistribution};
use crate::kernels::K_MAX;
use crate::rng::RngStream;

/// Highest order with a guaranteed finite closed form.
pub const MAX_CLOSED_FORM_ORDER: u32 = 2 * K_MAX as u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionSpec {
    Exponential { rate: f64 },
    Normal { mean: f64, sd: f64 },
    Finite { dist: FiniteDistribution },
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        let spec = DistributionSpec::Exponential { rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        let spec = DistributionSpec::Normal { mean, sd };
        spec.validate()?;
        Ok(spec)
    }

    pub fn finite(dist: FiniteDistribution) -> Self {
        DistributionSpec::Finite { dist }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DistributionSpec::Exponential { rate } if !(rate.is_finite() && rate > 0.0) => {
                Err(Error::InvalidDistribution(format!("exponential rate must be positive, got {rate}")))
            }
            DistributionSpec::Normal { mean, sd } if !(mean.is_finite() && sd.is_finite() && sd > 0.0) => {
                Err(Error::InvalidDistribution(format!("normal needs finite mean and sd > 0, got ({mean}, {sd})")))
            }
            _ => Ok(()),
        }
    }

    /// Parses `exp:λ`, `normal:μ,σ`, `finite:@path.json` or `point:c`.
    ///
    /// The finite form reads a `{"support": [...], "weights": [...]}` document.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("distribution `{s}` should look like kind:args")))?;
        let nums = |args: &str| -> Result<Vec<f64>> {
            args.split(',')
                .map(|a| a.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{a}`: {e}"))))
                .collect()
        };
        let spec = match kind.trim() {
            "exp" | "exponential" => match nums(args)?.as_slice() {
                [rate] => DistributionSpec::Exponential { rate: *rate },
                _ => return Err(Error::Parse("exp takes one rate parameter".into())),
            },
            "normal" => match nums(args)?.as_slice() {
                [mean, sd] => DistributionSpec::Normal { mean: *mean, sd: *sd },
                _ => return Err(Error::Parse("normal takes mean,sd".into())),
            },
            "point" => match nums(args)?.as_slice() {
                [c] => DistributionSpec::Finite { dist: FiniteDistribution::point_mass(*c)? },
                _ => return Err(Error::Parse("point takes one value".into())),
            },
            "finite" => {
                let path = args
                    .strip_prefix('@')
                    .ok_or_else(|| Error::Parse("finite distributions are read from files: finite:@path.json".into()))?;
                DistributionSpec::Finite { dist: read_finite(Path::new(path))? }
            }
            other => return Err(Error::Parse(format!("unknown distribution kind `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Short label for reports.
    pub fn label(&self) -> String {
        match self {
            DistributionSpec::Exponential { rate } => format!("exp:{rate}"),
            DistributionSpec::Normal { mean, sd } => format!("normal:{mean},{sd}"),
            DistributionSpec::Finite { dist } if dist.len() == 1 => format!("point:{}", dist.support()[0]),
            DistributionSpec::Finite { dist } => format!("finite[{}]", dist.len()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DistributionSpec::Exponential { rate } => 1.0 / rate,
            DistributionSpec::Normal { mean, .. } => *mean,
            DistributionSpec::Finite { dist } => dist.mean(),
        }
    }

    /// Fills `out` with i.i.d. draws from `rng`.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            DistributionSpec::Exponential { rate } => {
                let d = Exp::new(*rate).expect("validated rate");
                out.iter_mut().for_each(|x| *x = d.sample(rng));
            }
            DistributionSpec::Normal { mean, sd } => {
                let d = Normal::new(*mean, *sd).expect("validated sd");
                out.iter_mut().for_each(|x| *x = d.sample(rng));
            }
            DistributionSpec::Finite { dist } => {
                let cdf: Vec<f64> = dist
                    .weights()
                    .iter()
                    .scan(0.0, |acc, w| {
                        *acc += w;
                        Some(*acc)
                    })
                    .collect();
                let support = dist.support();
                for x in out.iter_mut() {
                    let u: f64 = rng.random();
                    let i = cdf.partition_point(|&c| c <= u).min(support.len() - 1);
                    *x = support[i];
                }
            }
        }
    }

    /// `n` i.i.d. draws from the stream.
    pub fn sample(&self, stream: RngStream, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.fill(&mut stream.rng(), &mut out);
        out
    }

    /// Exact `μ_k`.
    pub fn central_moment(&self, k: u32) -> f64 {
        closed_form_central_moment(self, k)
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DistributionSpec::parse(s)
    }
}

impl std::fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Reads the finite-distribution JSON schema `{"support": [...], "weights": [...]}`.
pub fn read_finite(path: &Path) -> Result<FiniteDistribution> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Number of derangements of `k` items, `D(k) = (k−1)(D(k−1) + D(k−2))`.
pub fn derangement(k: u32) -> u128 {
    let (mut prev, mut cur) = (1u128, 0u128); // D(0), D(1)
    if k == 0 {
        return prev;
    }
    for i in 2..=k {
        let next = (i as u128 - 1) * (cur + prev);
        prev = cur;
        cur = next;
    }
    cur
}

/// `(k−1)!! = 1·3·5···(k−1)` for even `k`.
fn odd_double_factorial(k: u32) -> f64 {
    (1..k).step_by(2).map(|i| i as f64).product()
}

/// Closed-form `μ_k = E{(X − μ_X)^k}`.
pub fn closed_form_central_moment(spec: &DistributionSpec, k: u32) -> f64 {
    match spec {
        DistributionSpec::Exponential { rate } => derangement(k) as f64 / rate.powi(k as i32),
        DistributionSpec::Normal { sd, .. } => {
            if k % 2 == 1 {
                0.0
            } else {
                sd.powi(k as i32) * odd_double_factorial(k)
            }
        }
        DistributionSpec::Finite { dist } => central_moment_exact(dist, k),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derangement_table() {
        let table = [1u128, 0, 1, 2, 9, 44, 265, 1854, 14833];
        for (k, &d) in table.iter().enumerate() {
            assert_eq!(derangement(k as u32), d);
        }
        for k in 2..=MAX_CLOSED_FORM_ORDER {
            assert_eq!(derangement(k), (k as u128 - 1) * (derangement(k - 1) + derangement(k - 2)));
        }
    }

    #[test]
    fn exponential_true_values() {
        let e = DistributionSpec::exponential(2.0).unwrap();
        let got: Vec<f64> = (2..=8).map(|k| e.central_moment(k)).collect();
        assert_eq!(got, vec![0.25, 0.25, 0.5625, 1.375, 4.140625, 14.484375, 57.94140625]);
        assert_eq!(e.central_moment(1), 0.0);
        for k in 1..=MAX_CLOSED_FORM_ORDER {
            assert!(e.central_moment(k).is_finite());
        }
    }

    #[test]
    fn normal_true_values() {
        let n = DistributionSpec::normal(0.0, 1.0).unwrap();
        assert_eq!(n.central_moment(4), 3.0);
        assert_eq!(n.central_moment(3), 0.0);
        assert_eq!(n.central_moment(8), 105.0);
        let n2 = DistributionSpec::normal(5.0, 2.0).unwrap();
        assert_eq!(n2.central_moment(2), 4.0);
    }

    #[test]
    fn finite_delegates_to_exact() {
        let d = FiniteDistribution::new(vec![0.0, 1.0, 5.0], vec![0.7, 0.2, 0.1]).unwrap();
        let spec = DistributionSpec::finite(d.clone());
        for k in 1..=8 {
            assert_eq!(spec.central_moment(k), central_moment_exact(&d, k));
        }
    }

    #[test]
    fn parse_forms() {
        assert_eq!(DistributionSpec::parse("exp:2").unwrap(), DistributionSpec::Exponential { rate: 2.0 });
        assert_eq!(DistributionSpec::parse("normal:0,1").unwrap(), DistributionSpec::Normal { mean: 0.0, sd: 1.0 });
        assert!(DistributionSpec::parse("exp:-1").is_err());
        assert!(DistributionSpec::parse("normal:0,0").is_err());
        assert!(DistributionSpec::parse("gamma:1").is_err());
        assert!(DistributionSpec::parse("finite:nofile").is_err());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.json");
        std::fs::write(&path, r#"{"support": [0, 1], "weights": [0.5, 0.5]}"#).unwrap();
        let spec = DistributionSpec::parse(&format!("finite:@{}", path.display())).unwrap();
        assert_eq!(spec.central_moment(2), 0.25);
    }

    #[test]
    fn point_mass_samples() {
        let spec = DistributionSpec::parse("point:7").unwrap();
        assert_eq!(spec.sample(RngStream::new(1, 0), 3), vec![7.0, 7.0, 7.0]);
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = DistributionSpec::exponential(2.0).unwrap();
        let a = spec.sample(RngStream::new(9, 4), 100);
        let b = spec.sample(RngStream::new(9, 4), 100);
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn finite_sampling_frequencies() {
        let d = FiniteDistribution::new(vec![0.0, 1.0, 5.0], vec![0.7, 0.2, 0.1]).unwrap();
        let spec = DistributionSpec::finite(d);
        let n = 200_000;
        let xs = spec.sample(RngStream::new(5, 0), n);
        let p5 = xs.iter().filter(|&&x| x == 5.0).count() as f64 / n as f64;
        // 5 standard errors of a binomial proportion
        assert!((p5 - 0.1).abs() < 5.0 * (0.1f64 * 0.9 / n as f64).sqrt());
    }

    #[test]
    fn serde_roundtrip() {
        let spec = DistributionSpec::exponential(2.0).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"exponential","rate":2.0}"#);
        assert_eq!(serde_json::from_str::<DistributionSpec>(&json).unwrap(), spec);
    }
}
