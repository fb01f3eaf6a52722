//! Population identities checked exactly against the enumeration engine.
//!
//! Each entry evaluates every side of an identity independently (direct
//! centered moments on one side, replicated pairwise-difference expectations on
//! the other) and reports the discrepancies.

use serde::{Deserialize, Serialize};

use super::{ExactEngine, FiniteDistribution, FiniteJoint};
use crate::error::{Error, Result};
use crate::kernels::{binomial, kernel_h, kernel_mu_bar, kernel_mu_tilde, kernel_p, sum_of_differences_d3};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Equal,
    /// `lhs ≥ rhs` up to tolerance.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub pass: bool,
}

impl Comparison {
    /// Equality with scale `max(1, |lhs|, |rhs|)`.
    pub fn equal(label: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::equal_scaled(label, lhs, rhs, 0.0, tolerance)
    }

    /// Equality with scale `max(1, |lhs|, |rhs|, scale)`.
    pub fn equal_scaled(label: impl Into<String>, lhs: f64, rhs: f64, scale: f64, tolerance: f64) -> Self {
        let abs_diff = (lhs - rhs).abs();
        let denom = 1f64.max(lhs.abs()).max(rhs.abs()).max(scale.abs());
        let rel_diff = abs_diff / denom;
        Self {
            label: label.into(),
            relation: Relation::Equal,
            lhs,
            rhs,
            abs_diff,
            rel_diff,
            pass: rel_diff <= tolerance,
        }
    }

    pub fn at_least(label: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let denom = 1f64.max(lhs.abs()).max(rhs.abs());
        let shortfall = (rhs - lhs).max(0.0);
        Self {
            label: label.into(),
            relation: Relation::AtLeast,
            lhs,
            rhs,
            abs_diff: shortfall,
            rel_diff: shortfall / denom,
            pass: shortfall <= tolerance * denom,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub tolerance: f64,
    pub comparisons: Vec<Comparison>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.comparisons.iter().all(|c| c.pass)
    }

    pub fn max_rel_diff(&self) -> f64 {
        self.comparisons.iter().map(|c| c.rel_diff).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Comparison> {
        self.comparisons.iter().filter(|c| !c.pass)
    }
}

/// Catalog entries, addressable by stable kebab-case names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityId {
    /// `C[X,Y] = ½E{(X₁−X₂)(Y₁−Y₂)}` and the single-replication variants.
    CovPairwise,
    /// Variance forms, including the three-replication form.
    VarPairwise,
    /// Four expressions of the regression slope of Y on X.
    RegressionBeta,
    /// Third and fourth central moments as covariances.
    MomentCov,
    /// Third and fourth moments with extra replications in levels.
    MomentCovReplicated,
    /// D-representations of the third central moment.
    Mu3Drep,
    /// D-representations of the fourth central moment.
    Mu4Drep,
    /// Skewness and kurtosis from pairwise differences.
    SkewKurtDrep,
    /// Recursions linking `μ_{n+1}` to lower moments.
    MomentRecursion,
    /// Unbiasedness of the recursive kernels `μ̄_k` and `μ̃_k`.
    RecursiveDrep,
    /// Lagrange identity for independent, non-identical random vectors.
    LagrangeGeneral,
    /// Centered (covariance) versions of the generalized Lagrange identity.
    LagrangeCov,
    /// Generalized Binet–Cauchy identity and its covariance form.
    BinetCauchy,
    /// Non-proportionality distance for `Y_i = b_i X_i`.
    LagrangeProportional,
    /// Squared correlation from the Lagrange distance.
    CorrelationLagrange,
    /// Unbiasedness of `h_k` and of the product kernel `P_k`.
    KernelHUnbiased,
}

impl IdentityId {
    pub const ALL: [IdentityId; 16] = [
        IdentityId::CovPairwise,
        IdentityId::VarPairwise,
        IdentityId::RegressionBeta,
        IdentityId::MomentCov,
        IdentityId::MomentCovReplicated,
        IdentityId::Mu3Drep,
        IdentityId::Mu4Drep,
        IdentityId::SkewKurtDrep,
        IdentityId::MomentRecursion,
        IdentityId::RecursiveDrep,
        IdentityId::LagrangeGeneral,
        IdentityId::LagrangeCov,
        IdentityId::BinetCauchy,
        IdentityId::LagrangeProportional,
        IdentityId::CorrelationLagrange,
        IdentityId::KernelHUnbiased,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentityId::CovPairwise => "cov-pairwise",
            IdentityId::VarPairwise => "var-pairwise",
            IdentityId::RegressionBeta => "regression-beta",
            IdentityId::MomentCov => "moment-cov",
            IdentityId::MomentCovReplicated => "moment-cov-replicated",
            IdentityId::Mu3Drep => "mu3-drep",
            IdentityId::Mu4Drep => "mu4-drep",
            IdentityId::SkewKurtDrep => "skew-kurt-drep",
            IdentityId::MomentRecursion => "moment-recursion",
            IdentityId::RecursiveDrep => "recursive-drep",
            IdentityId::LagrangeGeneral => "lagrange-general",
            IdentityId::LagrangeCov => "lagrange-cov",
            IdentityId::BinetCauchy => "binet-cauchy",
            IdentityId::LagrangeProportional => "lagrange-proportional",
            IdentityId::CorrelationLagrange => "correlation-lagrange",
            IdentityId::KernelHUnbiased => "kernel-h-unbiased",
        }
    }

    /// Dimension of the random vector the entry reads from its inputs.
    pub fn dimension(self) -> usize {
        match self {
            IdentityId::CovPairwise
            | IdentityId::RegressionBeta
            | IdentityId::LagrangeGeneral
            | IdentityId::LagrangeCov
            | IdentityId::CorrelationLagrange => 2,
            IdentityId::BinetCauchy => 4,
            _ => 1,
        }
    }

    /// Runs the entry. Columns `0..dimension()` of the inputs are used.
    pub fn verify(self, input: &IdentityInput, tolerance: f64) -> Result<IdentityReport> {
        input.primary.require_dim(self.dimension())?;
        let mut cx = Checks::new(input, tolerance);
        match self {
            IdentityId::CovPairwise => cov_pairwise(&mut cx)?,
            IdentityId::VarPairwise => var_pairwise(&mut cx)?,
            IdentityId::RegressionBeta => regression_beta(&mut cx)?,
            IdentityId::MomentCov => moment_cov(&mut cx)?,
            IdentityId::MomentCovReplicated => moment_cov_replicated(&mut cx)?,
            IdentityId::Mu3Drep => mu3_drep(&mut cx)?,
            IdentityId::Mu4Drep => mu4_drep(&mut cx)?,
            IdentityId::SkewKurtDrep => skew_kurt_drep(&mut cx)?,
            IdentityId::MomentRecursion => moment_recursion(&mut cx)?,
            IdentityId::RecursiveDrep => recursive_drep(&mut cx)?,
            IdentityId::LagrangeGeneral => lagrange_general(&mut cx)?,
            IdentityId::LagrangeCov => lagrange_cov(&mut cx)?,
            IdentityId::BinetCauchy => binet_cauchy(&mut cx)?,
            IdentityId::LagrangeProportional => lagrange_proportional(&mut cx)?,
            IdentityId::CorrelationLagrange => correlation_lagrange(&mut cx)?,
            IdentityId::KernelHUnbiased => kernel_h_unbiased(&mut cx)?,
        }
        Ok(IdentityReport { name: self.name().into(), tolerance, comparisons: cx.out })
    }
}

impl std::fmt::Display for IdentityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for IdentityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IdentityId::ALL
            .iter()
            .copied()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::UnknownIdentity(s.to_string()))
    }
}

/// Distributions and limits for a catalog run.
#[derive(Debug, Clone)]
pub struct IdentityInput {
    pub primary: FiniteJoint,
    /// Law of the second, independent but not identically distributed vector
    /// for the entries that allow one. Defaults to an affine image of
    /// `primary`.
    pub secondary: Option<FiniteJoint>,
    /// Highest moment order checked by the recursion and kernel entries.
    pub max_order: usize,
    /// Kernel orders whose enumeration would exceed this many states are
    /// skipped.
    pub order_budget: u64,
    /// `(b₁, b₂)` for the proportional case.
    pub proportionality: (f64, f64),
}

impl IdentityInput {
    pub fn new(primary: FiniteJoint) -> Self {
        Self { primary, secondary: None, max_order: 8, order_budget: 2_000_000, proportionality: (1.5, -0.75) }
    }

    pub fn with_secondary(mut self, secondary: FiniteJoint) -> Self {
        self.secondary = Some(secondary);
        self
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order;
        self
    }

    fn secondary(&self) -> Result<FiniteJoint> {
        match &self.secondary {
            Some(s) => {
                s.require_dim(self.primary.dim())?;
                Ok(s.clone())
            }
            None => self.primary.map(|p| p.iter().enumerate().map(|(i, v)| (1.0 + 0.25 * i as f64) * v - 0.3).collect()),
        }
    }
}

impl From<&FiniteDistribution> for IdentityInput {
    fn from(d: &FiniteDistribution) -> Self {
        IdentityInput::new(d.to_joint())
    }
}

struct Checks<'a> {
    input: &'a IdentityInput,
    engine: ExactEngine,
    tolerance: f64,
    out: Vec<Comparison>,
}

impl<'a> Checks<'a> {
    fn new(input: &'a IdentityInput, tolerance: f64) -> Self {
        Self { input, engine: ExactEngine::default(), tolerance, out: Vec::new() }
    }

    fn eq(&mut self, label: impl Into<String>, lhs: f64, rhs: f64) {
        self.out.push(Comparison::equal(label, lhs, rhs, self.tolerance));
    }

    fn at_least(&mut self, label: impl Into<String>, lhs: f64, rhs: f64) {
        self.out.push(Comparison::at_least(label, lhs, rhs, self.tolerance));
    }

    fn x(&self) -> Result<FiniteDistribution> {
        self.input.primary.marginal(0)
    }

    fn xy(&self) -> Result<FiniteJoint> {
        self.input.primary.project(&[0, 1])
    }

    fn iid(&self, d: &FiniteDistribution, m: usize, g: impl Fn(&[f64]) -> f64 + Sync) -> Result<f64> {
        self.engine.expect_iid(d, m, g)
    }

    fn iid_joint(&self, d: &FiniteJoint, m: usize, g: impl Fn(&[&[f64]]) -> f64 + Sync) -> Result<f64> {
        self.engine.expect_joint_iid(d, m, g)
    }

    fn pair(&self, a: &FiniteJoint, b: &FiniteJoint, g: impl Fn(&[&[f64]]) -> f64 + Sync) -> Result<f64> {
        self.engine.expect_joint(&[a, b], g)
    }

    /// Orders `k ≤ max_order` whose `m`-fold enumeration fits the budget.
    fn orders(&self, support: usize, replications: impl Fn(usize) -> usize) -> Vec<usize> {
        (2..=self.input.max_order)
            .filter(|&k| (support as f64).powi(replications(k) as i32) <= self.input.order_budget as f64)
            .collect()
    }
}

fn nonzero(v: f64, what: &'static str) -> Result<f64> {
    if v.abs() <= f64::EPSILON * 16.0 {
        return Err(Error::Degenerate(what));
    }
    Ok(v)
}

fn cov_pairwise(cx: &mut Checks<'_>) -> Result<()> {
    let d = cx.xy()?;
    let cov = d.covariance(0, 1);
    let half = 0.5 * cx.iid_joint(&d, 2, |z| (z[0][0] - z[1][0]) * (z[0][1] - z[1][1]))?;
    cx.eq("C[X,Y] = 1/2 E{(X1-X2)(Y1-Y2)}", cov, half);
    let v = cx.iid_joint(&d, 2, |z| z[0][0] * (z[0][1] - z[1][1]))?;
    cx.eq("C[X,Y] = E{X1(Y1-Y2)}", cov, v);
    let v = -cx.iid_joint(&d, 2, |z| z[1][0] * (z[0][1] - z[1][1]))?;
    cx.eq("C[X,Y] = -E{X2(Y1-Y2)}", cov, v);
    let v = cx.iid_joint(&d, 2, |z| (z[0][0] - z[1][0]) * z[0][1])?;
    cx.eq("C[X,Y] = E{(X1-X2)Y1}", cov, v);
    let v = -cx.iid_joint(&d, 2, |z| (z[0][0] - z[1][0]) * z[1][1])?;
    cx.eq("C[X,Y] = -E{(X1-X2)Y2}", cov, v);
    Ok(())
}

fn var_pairwise(cx: &mut Checks<'_>) -> Result<()> {
    let x = cx.x()?;
    let var = x.central_moment(2);
    let mu = x.mean();
    let half_sq = 0.5 * cx.iid(&x, 2, |v| (v[0] - v[1]).powi(2))?;
    cx.eq("var = 1/2 E{(X1-X2)^2}", var, half_sq);
    let lead = cx.iid(&x, 2, |v| v[0] * (v[0] - v[1]))?;
    cx.eq("var = E{X1(X1-X2)}", var, lead);
    let trail = -cx.iid(&x, 2, |v| v[1] * (v[0] - v[1]))?;
    cx.eq("var = -E{X2(X1-X2)}", var, trail);
    let three = cx.iid(&x, 3, |v| (v[0] - v[2]) * (v[0] - v[1]))?;
    cx.eq("var = E{(X1-X3)(X1-X2)}", var, three);
    let raw2 = x.expect1(|v| v * v);
    cx.eq("E{X^2} = 1/2 E{(X1-X2)^2} + mu^2", raw2, half_sq + mu * mu);
    cx.eq("E{X^2} = E{X1(X1-X2)} + mu^2", raw2, lead + mu * mu);
    cx.eq("E{X^2} = -E{X2(X1-X2)} + mu^2", raw2, trail + mu * mu);
    Ok(())
}

fn regression_beta(cx: &mut Checks<'_>) -> Result<()> {
    let d = cx.xy()?;
    let beta = d.covariance(0, 1) / nonzero(d.covariance(0, 0), "zero variance of X")?;
    let num = cx.iid_joint(&d, 2, |z| (z[0][0] - z[1][0]) * (z[0][1] - z[1][1]))?;
    let den = cx.iid_joint(&d, 2, |z| (z[0][0] - z[1][0]).powi(2))?;
    cx.eq("beta = E{(X1-X2)(Y1-Y2)} / E{(X1-X2)^2}", beta, num / den);
    let num = cx.iid_joint(&d, 2, |z| (z[0][0] - z[1][0]) * z[0][1])?;
    let den = cx.iid_joint(&d, 2, |z| (z[0][0] - z[1][0]) * z[0][0])?;
    cx.eq("beta = E{(X1-X2)Y1} / E{(X1-X2)X1}", beta, num / den);
    let num = cx.iid_joint(&d, 2, |z| z[0][0] * (z[0][1] - z[1][1]))?;
    let den = cx.iid_joint(&d, 2, |z| z[0][0] * (z[0][0] - z[1][0]))?;
    cx.eq("beta = E{X1(Y1-Y2)} / E{X1(X1-X2)}", beta, num / den);
    Ok(())
}

/// `C[X, f(X)]` from a single replication.
fn cov_with(x: &FiniteDistribution, f: impl Fn(f64) -> f64) -> f64 {
    let mu = x.mean();
    x.expect1(|v| v * f(v)) - mu * x.expect1(&f)
}

fn moment_cov(cx: &mut Checks<'_>) -> Result<()> {
    let x = cx.x()?;
    let mu = x.mean();
    let var = x.central_moment(2);
    let mu3 = x.central_moment(3);
    let mu4 = x.central_moment(4);

    cx.eq("mu3 = C[X,(X-mu)^2]", mu3, cov_with(&x, |v| (v - mu).powi(2)));
    let cov_x2 = cov_with(&x, |v| v * v);
    cx.eq("mu3 = C[X,X^2] - 2 mu var", mu3, cov_x2 - 2.0 * mu * var);
    let v = cx.iid(&x, 2, |z| (z[0] - z[1]) * (z[0] - mu).powi(2))?;
    cx.eq("mu3 = E{(X1-X2)(X1-mu)^2}", mu3, v);
    let v = cx.iid(&x, 2, |z| (z[0] - z[1]) * z[0] * z[0])?;
    cx.eq("mu3 = E{(X1-X2)X1^2} - 2 mu var", mu3, v - 2.0 * mu * var);
    let v = 0.5 * cx.iid(&x, 2, |z| (z[0] - z[1]) * ((z[0] - mu).powi(2) - (z[1] - mu).powi(2)))?;
    cx.eq("mu3 = 1/2 E{(X1-X2)[(X1-mu)^2-(X2-mu)^2]}", mu3, v);
    let a = 0.5 * cx.iid(&x, 2, |z| (z[0] - z[1]) * (z[0] * z[0] - z[1] * z[1]))?;
    let b = cx.iid(&x, 2, |z| (z[0] - z[1]).powi(2))?;
    cx.eq("mu3 = 1/2 E{(X1-X2)(X1^2-X2^2)} - mu E{(X1-X2)^2}", mu3, a - mu * b);

    cx.eq("mu4 = C[X,(X-mu)^3]", mu4, cov_with(&x, |v| (v - mu).powi(3)));
    let cov_x3 = cov_with(&x, |v| v.powi(3));
    cx.eq(
        "mu4 = C[X,X^3] - 3 mu C[X,X^2] + 3 mu^2 var",
        mu4,
        cov_x3 - 3.0 * mu * cov_x2 + 3.0 * mu * mu * var,
    );
    let v = cx.iid(&x, 2, |z| (z[0] - z[1]) * (z[0] - mu).powi(3))?;
    cx.eq("mu4 = E{(X1-X2)(X1-mu)^3}", mu4, v);
    // Expanding (X1−μ)³ and dropping the constant, which E{X1−X2} = 0 kills.
    let v = cx.iid(&x, 2, |z| (z[0] - z[1]) * (z[0].powi(3) - 3.0 * mu * z[0] * z[0] + 3.0 * mu * mu * z[0]))?;
    cx.eq("mu4 = E{(X1-X2)(X1^3 - 3 mu X1^2 + 3 mu^2 X1)}", mu4, v);
    let v = 0.5 * cx.iid(&x, 2, |z| (z[0] - z[1]) * ((z[0] - mu).powi(3) - (z[1] - mu).powi(3)))?;
    cx.eq("mu4 = 1/2 E{(X1-X2)[(X1-mu)^3-(X2-mu)^3]}", mu4, v);
    let a = 0.5 * cx.iid(&x, 2, |z| (z[0] - z[1]) * (z[0].powi(3) - z[1].powi(3)))?;
    cx.eq(
        "mu4 = 1/2 E{(X1-X2)(X1^3-X2^3)} - 3 mu mu3 - 3 mu^2 var",
        mu4,
        a - 3.0 * mu * mu3 - 3.0 * mu * mu * var,
    );
    Ok(())
}

fn moment_cov_replicated(cx: &mut Checks<'_>) -> Result<()> {
    let x = cx.x()?;
    let mu3 = x.central_moment(3);
    let mu4 = x.central_moment(4);
    let ex = cx.iid(&x, 1, |z| z[0])?;
    let d2 = cx.iid(&x, 2, |z| (z[0] - z[1]).powi(2))?;
    let c2 = cx.iid(&x, 2, |z| (z[0] - z[1]) * (z[0] * z[0] - z[1] * z[1]))?;
    let c3 = cx.iid(&x, 2, |z| (z[0] - z[1]) * (z[0].powi(3) - z[1].powi(3)))?;

    cx.eq("mu3 = 1/2 E{(X1-X2)(X1^2-X2^2)} - E{X3} E{(X1-X2)^2}", mu3, 0.5 * c2 - ex * d2);
    let v = 0.5 * cx.iid(&x, 3, |z| (z[0] - z[1]) * ((z[0] * z[0] - z[1] * z[1]) - 2.0 * z[2] * (z[0] - z[1])))?;
    cx.eq("mu3 = 1/2 E{(X1-X2)[(X1^2-X2^2) - 2 X3 (X1-X2)]}", mu3, v);

    cx.eq(
        "mu4 = 1/2 E{(X1-X2)(X1^3-X2^3)} - 3/2 E{X3} E{..} + 3/2 E{X3}E{X4} E{(X1-X2)^2}",
        mu4,
        0.5 * c3 - 1.5 * ex * c2 + 1.5 * ex * ex * d2,
    );
    let v = 0.5
        * cx.iid(&x, 4, |z| {
            let d = z[0] - z[1];
            d * (z[0].powi(3) - z[1].powi(3)) - 3.0 * z[2] * d * (z[0] * z[0] - z[1] * z[1]) + 3.0 * z[2] * z[3] * d * d
        })?;
    cx.eq("mu4 = 1/2 E{four-replication form}", mu4, v);
    Ok(())
}

fn mu3_drep(cx: &mut Checks<'_>) -> Result<()> {
    let x = cx.x()?;
    let mu3 = x.central_moment(3);
    let v = cx.iid(&x, 3, |z| (z[0] - z[2]) * (z[0] - z[1]).powi(2))?;
    cx.eq("mu3 = E{(X1-X3)(X1-X2)^2}", mu3, v);
    let v = 0.5 * cx.iid(&x, 3, |z| (z[0] - z[1]) * ((z[0] - z[2]).powi(2) - (z[1] - z[2]).powi(2)))?;
    cx.eq("mu3 = 1/2 E{(X1-X2)[(X1-X3)^2-(X2-X3)^2]}", mu3, v);
    let v = 0.5 * cx.iid(&x, 3, |z| (z[0] - z[1]).powi(2) * ((z[0] - z[2]) + (z[1] - z[2])))?;
    cx.eq("mu3 = 1/2 E{(X1-X2)^2[(X1-X3)+(X2-X3)]}", mu3, v);
    let v = cx.iid(&x, 3, |z| {
        let d = sum_of_differences_d3([z[0], z[1], z[2]]);
        d[0] * d[1] * d[2]
    })? / 6.0;
    cx.eq("mu3 = 1/6 E{D1 D2 D3}", mu3, v);
    let v = 4.5
        * cx.iid(&x, 3, |z| {
            let m = (z[0] + z[1] + z[2]) / 3.0;
            (z[0] - m) * (z[1] - m) * (z[2] - m)
        })?;
    cx.eq("mu3 = 9/2 E{(X1-Xbar)(X2-Xbar)(X3-Xbar)}", mu3, v);
    let v = 0.5
        * cx.iid(&x, 3, |z| {
            let (a, b) = (z[0] - z[2], z[1] - z[2]);
            (a - b) * (a * a - b * b)
        })?;
    cx.eq("mu3 = 1/2 E{[(X1-X3)-(X2-X3)][(X1-X3)^2-(X2-X3)^2]}", mu3, v);
    let v = 0.5
        * cx.iid(&x, 3, |z| {
            let (a, b) = (z[0] - z[2], z[1] - z[2]);
            (a - b).powi(2) * (a + b)
        })?;
    cx.eq("mu3 = 1/2 E{[(X1-X3)-(X2-X3)]^2[(X1-X3)+(X2-X3)]}", mu3, v);
    Ok(())
}

fn mu4_drep(cx: &mut Checks<'_>) -> Result<()> {
    let x = cx.x()?;
    let mu4 = x.central_moment(4);
    let var = x.central_moment(2);
    let d4 = cx.iid(&x, 2, |z| (z[0] - z[1]).powi(4))?;
    let d2 = cx.iid(&x, 2, |z| (z[0] - z[1]).powi(2))?;
    cx.eq("mu4 = 1/2 E{(X1-X2)^4} - 3 var^2", mu4, 0.5 * d4 - 3.0 * var * var);
    cx.eq("mu4 = 1/2 E{(X1-X2)^4} - 3/4 (E{(X1-X2)^2})^2", mu4, 0.5 * d4 - 0.75 * d2 * d2);
    let v = cx.iid(&x, 4, |z| 0.5 * (z[0] - z[1]).powi(4) - 0.75 * (z[0] - z[1]).powi(2) * (z[2] - z[3]).powi(2))?;
    cx.eq("mu4 = E{1/2 (X1-X2)^4 - 3/4 (X1-X2)^2 (X3-X4)^2}", mu4, v);
    Ok(())
}

fn skew_kurt_drep(cx: &mut Checks<'_>) -> Result<()> {
    let x = cx.x()?;
    let mu = x.mean();
    let var = nonzero(x.central_moment(2), "zero variance")?;
    let sd = var.sqrt();
    let skew = x.central_moment(3) / (var * sd);
    let kurt = x.central_moment(4) / (var * var);

    let c2 = cx.iid(&x, 2, |z| (z[0] - z[1]) * (z[0] * z[0] - z[1] * z[1]))?;
    cx.eq("Sk = E{(X1-X2)(X1^2-X2^2)}/(2 sd^3) - 2 mu/sd", skew, c2 / (2.0 * var * sd) - 2.0 * mu / sd);
    let t = cx.iid(&x, 3, |z| (z[0] - z[2]) * (z[0] - z[1]).powi(2))?;
    cx.eq("Sk = E{(X1-X3)(X1-X2)^2}/sd^3", skew, t / (var * sd));
    let d2 = cx.iid(&x, 2, |z| (z[0] - z[1]).powi(2))?;
    cx.eq("Sk = sqrt(8) E{(X1-X3)(X1-X2)^2}/(E{(X1-X2)^2})^1.5", skew, 8f64.sqrt() * t / d2.powf(1.5));
    let ddd = cx.iid(&x, 3, |z| {
        let d = sum_of_differences_d3([z[0], z[1], z[2]]);
        d[0] * d[1] * d[2]
    })?;
    cx.eq("Sk = sqrt(2)/3 E{D1 D2 D3}/(E{(X1-X2)^2})^1.5", skew, 2f64.sqrt() / 3.0 * ddd / d2.powf(1.5));

    let d4 = cx.iid(&x, 2, |z| (z[0] - z[1]).powi(4))?;
    let kur_pairwise = 2.0 * d4 / (d2 * d2) - 3.0;
    cx.eq("Kur = 2 E{(X1-X2)^4}/(E{(X1-X2)^2})^2 - 3", kurt, kur_pairwise);
    cx.eq("EKur = Kur - 3", kurt - 3.0, kur_pairwise - 3.0);
    Ok(())
}

fn moment_recursion(cx: &mut Checks<'_>) -> Result<()> {
    let x = cx.x()?;
    let mu = x.mean();
    let top = cx.input.max_order.max(2);
    let moments: Vec<f64> = (0..=top as u32).map(|k| x.central_moment(k)).collect();
    for n in 1..top {
        let target = moments[n + 1];
        let p = n as i32;
        let v = x.expect1(|v| v * (v - mu).powi(p)) - mu * moments[n];
        cx.eq(format!("mu{} = E{{X(X-mu)^{n}}} - mu mu{n}", n + 1), target, v);
        let v = cx.iid(&x, 2, |z| (z[0] - z[1]) * (z[0] - mu).powi(p))?;
        cx.eq(format!("mu{} = E{{(X1-X2)(X1-mu)^{n}}}", n + 1), target, v);
        // Each term of the correction is a product of exactly computed moments,
        // so the cancellation in the subtraction is benign.
        let lead = cx.iid(&x, 3, |z| (z[0] - z[2]) * (z[0] - z[1]).powi(p))?;
        let corr: f64 = (2..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * binomial(n as u32, j as u32).expect("j < n") as f64 * moments[j] * moments[n + 1 - j]
            })
            .sum();
        cx.eq(format!("mu{} = E{{(X1-X3)(X1-X2)^{n}}} - sum", n + 1), target, lead - corr);
        if (n + 1) % 2 == 0 {
            let m = n + 1;
            let pow = cx.iid(&x, 2, |z| (z[0] - z[1]).powi(m as i32))?;
            let corr: f64 = (2..n)
                .map(|j| {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    sign * binomial(m as u32, j as u32).expect("j < m") as f64 * moments[j] * moments[m - j]
                })
                .sum();
            cx.eq(format!("mu{m} = 1/2 [E{{(X1-X2)^{m}}} - sum]"), target, 0.5 * (pow - corr));
        }
    }
    Ok(())
}

fn recursive_drep(cx: &mut Checks<'_>) -> Result<()> {
    let x = cx.x()?;
    let support = x.len();
    for k in cx.orders(support, |k| k) {
        let target = x.central_moment(k as u32);
        let v = cx.iid(&x, k, |z| kernel_mu_bar(k, z).expect("validated order"))?;
        cx.eq(format!("E mubar_{k} = mu{k}"), target, v);
        if k % 2 == 0 {
            let v = cx.iid(&x, k, |z| kernel_mu_tilde(k, z).expect("validated even order"))?;
            cx.eq(format!("E mutilde_{k} = mu{k}"), target, v);
        }
    }
    Ok(())
}

fn kernel_h_unbiased(cx: &mut Checks<'_>) -> Result<()> {
    let x = cx.x()?;
    let support = x.len();
    for k in cx.orders(support, |k| k) {
        let target = x.central_moment(k as u32);
        let v = cx.iid(&x, k, |z| kernel_h(k, z).expect("validated order"))?;
        cx.eq(format!("E h_{k} = mu{k}"), target, v);
    }
    for k in cx.orders(support, |k| k + 1) {
        let target = x.central_moment(k as u32);
        let v = cx.iid(&x, k + 1, |z| kernel_p(z[0], &z[1..]).expect("non-empty"))?;
        cx.eq(format!("E P_{k} = mu{k}"), target, v);
    }
    Ok(())
}

fn raw(d: &FiniteJoint, a: usize, b: usize) -> f64 {
    d.expect1(|p| p[a] * p[b])
}

fn lagrange_general(cx: &mut Checks<'_>) -> Result<()> {
    let p = cx.xy()?;
    let q = cx.input.secondary()?.project(&[0, 1])?;
    let lhs = 0.5 * (raw(&p, 0, 0) * raw(&q, 1, 1) + raw(&q, 0, 0) * raw(&p, 1, 1)) - raw(&p, 0, 1) * raw(&q, 0, 1);
    let rhs = 0.5 * cx.pair(&p, &q, |z| (z[0][0] * z[1][1] - z[1][0] * z[0][1]).powi(2))?;
    cx.eq("1/2(E X1^2 E Y2^2 + E X2^2 E Y1^2) - E X1Y1 E X2Y2 = 1/2 E{(X1Y2-X2Y1)^2}", lhs, rhs);
    cx.at_least("1/2 E{(X1Y2-X2Y1)^2} >= 0", rhs, 0.0);
    let bound = 0.5 * (p.covariance(0, 0) * q.covariance(1, 1) + q.covariance(0, 0) * p.covariance(1, 1));
    cx.at_least("C[X1,Y1] C[X2,Y2] <= 1/2(var X1 var Y2 + var X2 var Y1)", bound, p.covariance(0, 1) * q.covariance(0, 1));
    Ok(())
}

/// `½E{(X̃₁Ỹ₂ − X̃₂Ỹ₁)²}` with each vector centered by its own means.
fn centered_lagrange_distance(cx: &Checks<'_>, p: &FiniteJoint, q: &FiniteJoint) -> Result<f64> {
    let (px, py, qx, qy) = (p.mean(0), p.mean(1), q.mean(0), q.mean(1));
    Ok(0.5 * cx.pair(p, q, |z| ((z[0][0] - px) * (z[1][1] - qy) - (z[1][0] - qx) * (z[0][1] - py)).powi(2))?)
}

fn lagrange_cov(cx: &mut Checks<'_>) -> Result<()> {
    let p = cx.xy()?;
    let q = cx.input.secondary()?.project(&[0, 1])?;
    let lhs = 0.5 * (p.covariance(0, 0) * q.covariance(1, 1) + q.covariance(0, 0) * p.covariance(1, 1))
        - p.covariance(0, 1) * q.covariance(0, 1);
    let rhs = centered_lagrange_distance(cx, &p, &q)?;
    cx.eq("order 2: 1/2(vX1 vY2 + vX2 vY1) - C1 C2", lhs, rhs);

    // Same variances, opposite covariance.
    let mirrored = p.map(|z| vec![z[0] + 0.5, -z[1] - 0.25])?;
    let lhs = p.covariance(0, 0) * p.covariance(1, 1) - p.covariance(0, 1) * mirrored.covariance(0, 1);
    let rhs = centered_lagrange_distance(cx, &p, &mirrored)?;
    cx.eq("equal variances: vX1 vY1 - C1 C2", lhs, rhs);

    let lhs = p.covariance(0, 0) * p.covariance(1, 1) - p.covariance(0, 1).powi(2);
    let rhs = centered_lagrange_distance(cx, &p, &p)?;
    cx.eq("i.i.d.: vX vY - C^2", lhs, rhs);
    // Same covariance matrix with shifted means.
    let shifted = p.map(|z| vec![z[0] - 0.7, z[1] + 1.1])?;
    let rhs = centered_lagrange_distance(cx, &p, &shifted)?;
    cx.eq("same covariance matrix: vX vY - C^2", lhs, rhs);
    Ok(())
}

fn binet_cauchy(cx: &mut Checks<'_>) -> Result<()> {
    let p = cx.input.primary.project(&[0, 1, 2, 3])?;
    let q = cx.input.secondary()?.project(&[0, 1, 2, 3])?;
    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;
    let lhs = cx.pair(&p, &q, |z| (z[0][A] * z[1][B] - z[1][A] * z[0][B]) * (z[0][C] * z[1][D] - z[1][C] * z[0][D]))?;
    let rhs = raw(&p, A, C) * raw(&q, B, D) + raw(&q, A, C) * raw(&p, B, D)
        - (raw(&p, A, D) * raw(&q, B, C) + raw(&q, A, D) * raw(&p, B, C));
    cx.eq("E{(A1B2-A2B1)(C1D2-C2D1)} = moment products", lhs, rhs);

    let shifted = p.map(|z| vec![z[0] + 0.4, z[1] - 0.9, z[2] + 1.3, z[3] - 0.2])?;
    let means_p: Vec<f64> = (0..4).map(|c| p.mean(c)).collect();
    let means_s: Vec<f64> = (0..4).map(|c| shifted.mean(c)).collect();
    let lhs = p.covariance(A, C) * p.covariance(B, D) - p.covariance(A, D) * p.covariance(B, C);
    let rhs = 0.5
        * cx.pair(&p, &shifted, |z| {
            let u: Vec<f64> = (0..4).map(|c| z[0][c] - means_p[c]).collect();
            let w: Vec<f64> = (0..4).map(|c| z[1][c] - means_s[c]).collect();
            (u[A] * w[B] - w[A] * u[B]) * (u[C] * w[D] - w[C] * u[D])
        })?;
    cx.eq("C[A,C]C[B,D] - C[A,D]C[B,C] = 1/2 E{centered products}", lhs, rhs);

    // A = C, B = D reduces to the centered Lagrange identity.
    let lhs = p.covariance(A, A) * p.covariance(B, B) - p.covariance(A, B).powi(2);
    let rhs = 0.5
        * cx.pair(&p, &shifted, |z| {
            let (a1, b1) = (z[0][A] - means_p[A], z[0][B] - means_p[B]);
            let (a2, b2) = (z[1][A] - means_s[A], z[1][B] - means_s[B]);
            (a1 * b2 - a2 * b1).powi(2)
        })?;
    cx.eq("A=C, B=D: vA vB - C[A,B]^2", lhs, rhs);
    Ok(())
}

fn lagrange_proportional(cx: &mut Checks<'_>) -> Result<()> {
    let x1 = cx.x()?;
    let x2 = cx.input.secondary()?.marginal(0)?;
    let (b1, b2) = cx.input.proportionality;
    let f1 = x1.to_joint();
    let f2 = x2.to_joint();
    let lhs = cx.pair(&f1, &f2, |z| (z[0][0] * (b2 * z[1][0]) - z[1][0] * (b1 * z[0][0])).powi(2))?;
    let prod = cx.pair(&f1, &f2, |z| (z[0][0] * z[1][0]).powi(2))?;
    cx.eq("E{(X1Y2-X2Y1)^2} = (b2-b1)^2 E{(X1X2)^2}", lhs, (b2 - b1).powi(2) * prod);
    let same = cx.pair(&f1, &f2, |z| (z[0][0] * (b1 * z[1][0]) - z[1][0] * (b1 * z[0][0])).powi(2))?;
    cx.eq("b1 = b2 gives zero distance", same, 0.0);
    Ok(())
}

fn correlation_lagrange(cx: &mut Checks<'_>) -> Result<()> {
    let p = cx.xy()?;
    let vx = nonzero(p.covariance(0, 0), "zero variance of X")?;
    let vy = nonzero(p.covariance(1, 1), "zero variance of Y")?;
    let rho2 = p.covariance(0, 1).powi(2) / (vx * vy);
    let dist = 2.0 * centered_lagrange_distance(cx, &p, &p)?;
    cx.eq("rho^2 = 1 - E{(X~1Y~2-X~2Y~1)^2}/(2 vX vY)", rho2, 1.0 - dist / (2.0 * vx * vy));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_round_trip() {
        for id in IdentityId::ALL {
            assert_eq!(id.name().parse::<IdentityId>().unwrap(), id);
        }
        assert!(matches!("nope".parse::<IdentityId>(), Err(Error::UnknownIdentity(_))));
    }

    #[test]
    fn cov_pairwise_on_bernoulli_with_itself() {
        let d = FiniteJoint::new(2, vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![1.0, 1.0]).unwrap();
        let r = IdentityId::CovPairwise.verify(&IdentityInput::new(d), DEFAULT_TOLERANCE).unwrap();
        assert!(r.passed());
        assert_eq!(r.comparisons[0].lhs, 0.25);
        assert_eq!(r.comparisons[0].rhs, 0.25);
    }

    #[test]
    fn lagrange_general_two_point() {
        let p = FiniteJoint::new(2, vec![vec![1.0, 2.0], vec![-1.0, 0.5]], vec![0.3, 0.7]).unwrap();
        let r = IdentityId::LagrangeGeneral.verify(&IdentityInput::new(p.clone()).with_secondary(p), DEFAULT_TOLERANCE).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.comparisons[0].rhs >= 0.0);
    }

    #[test]
    fn mu3_drep_point_mass_is_zero() {
        let d = FiniteDistribution::point_mass(3.0).unwrap();
        let r = IdentityId::Mu3Drep.verify(&IdentityInput::from(&d), DEFAULT_TOLERANCE).unwrap();
        assert!(r.passed());
        assert!(r.comparisons.iter().all(|c| c.lhs == 0.0 && c.rhs == 0.0));
    }

    #[test]
    fn ratio_entries_reject_degenerate() {
        let d = FiniteDistribution::point_mass(3.0).unwrap();
        let err = IdentityId::SkewKurtDrep.verify(&IdentityInput::from(&d), DEFAULT_TOLERANCE).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn dimension_is_checked() {
        let d = FiniteDistribution::uniform(&[0.0, 1.0]).unwrap();
        assert!(IdentityId::BinetCauchy.verify(&IdentityInput::from(&d), DEFAULT_TOLERANCE).is_err());
    }

    #[test]
    fn every_entry_passes_on_a_random_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = FiniteJoint::random(&mut rng, 4, 4);
        let q = FiniteJoint::random(&mut rng, 3, 4);
        let input = IdentityInput::new(p).with_secondary(q).with_max_order(6);
        for id in IdentityId::ALL {
            let r = id.verify(&input, DEFAULT_TOLERANCE).unwrap();
            assert!(r.passed(), "{id}: {:?}", r.failures().collect::<Vec<_>>());
            assert!(!r.comparisons.is_empty());
        }
    }

    #[test]
    fn wrong_relation_is_caught() {
        // A deliberately wrong "identity" must fail at the same tolerance.
        let c = Comparison::equal("x", 1.0, 1.0 + 1e-8, DEFAULT_TOLERANCE);
        assert!(!c.pass);
        let c = Comparison::at_least("x", -1e-3, 0.0, DEFAULT_TOLERANCE);
        assert!(!c.pass);
        let c = Comparison::at_least("x", -1e-13, 0.0, DEFAULT_TOLERANCE);
        assert!(c.pass);
    }
}
