//! Seeded bias experiments for the natural and D-estimators.
//!
//! Replication `r` draws its sample for sample-size group `n` from stream
//! `(seed, r, n, 0)`; the Monte Carlo tuples for order `k` come from
//! `(seed, r, n, 1 + k)`. Both estimators therefore see the same data.
//! Replications run in parallel in fixed-size chunks and are reduced in
//! replication order, so reports do not depend on the thread count.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::estimators::{mc_raw, natural_raw, NaturalDivisor};
use crate::kernels::{symmetrized_unchecked, KernelOrder};
use crate::rng::RngStream;
use crate::sum::NeumaierSum;

/// Replications evaluated between two sequential reduction steps.
const CHUNK: u64 = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Sample size equals the order; the D-estimator averages `h_k` over all
    /// `k!` orderings of the sample.
    MinimalNEqualsK,
    /// Fixed sample sizes above every order; the D-estimator is the Monte
    /// Carlo average over random distinct-index tuples.
    MonteCarloNGreaterK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub distribution: DistributionSpec,
    pub orders: Vec<usize>,
    /// Ignored when `mode` is `MinimalNEqualsK`.
    #[serde(default)]
    pub sample_sizes: Vec<usize>,
    pub replications: u64,
    #[serde(default = "default_mc_tuples")]
    pub mc_tuples: u64,
    pub seed: u64,
    pub mode: Mode,
    #[serde(default)]
    pub divisor: NaturalDivisor,
}

fn default_mc_tuples() -> u64 {
    30_000
}

impl ExperimentConfig {
    /// Orders 2–8 at `n = k` with `10⁵` replications.
    pub fn table1(distribution: DistributionSpec, seed: u64) -> Self {
        Self {
            distribution,
            orders: (2..=8).collect(),
            sample_sizes: Vec::new(),
            replications: 100_000,
            mc_tuples: default_mc_tuples(),
            seed,
            mode: Mode::MinimalNEqualsK,
            divisor: NaturalDivisor::NMinusOne,
        }
    }

    /// Orders 2–8 at `n ∈ {50, 100}`, 500 replications of 30 000 tuples.
    pub fn table2(distribution: DistributionSpec, seed: u64) -> Self {
        Self {
            distribution,
            orders: (2..=8).collect(),
            sample_sizes: vec![50, 100],
            replications: 500,
            mc_tuples: default_mc_tuples(),
            seed,
            mode: Mode::MonteCarloNGreaterK,
            divisor: NaturalDivisor::NMinusOne,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        if self.orders.is_empty() {
            return Err(Error::Config("no orders given".into()));
        }
        for &k in &self.orders {
            KernelOrder::new(k)?;
        }
        let mut sorted = self.orders.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.orders.len() {
            return Err(Error::Config("orders must be distinct".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.mode == Mode::MonteCarloNGreaterK {
            if self.mc_tuples == 0 {
                return Err(Error::Config("mc_tuples must be at least 1".into()));
            }
            if self.sample_sizes.is_empty() {
                return Err(Error::Config("Monte Carlo mode needs sample sizes".into()));
            }
            let max_k = *sorted.last().unwrap();
            for &n in &self.sample_sizes {
                if n < max_k {
                    return Err(Error::Config(format!("sample size {n} below order {max_k}")));
                }
                if n > u16::MAX as usize {
                    return Err(Error::Config(format!("sample size {n} above {}", u16::MAX)));
                }
            }
        }
        Ok(())
    }

    /// `(n, orders)` groups sharing one sample per replication.
    fn groups(&self) -> Vec<(usize, Vec<usize>)> {
        match self.mode {
            Mode::MinimalNEqualsK => self.orders.iter().map(|&k| (k, vec![k])).collect(),
            Mode::MonteCarloNGreaterK => self.sample_sizes.iter().map(|&n| (n, self.orders.clone())).collect(),
        }
    }

    fn d_estimator(&self) -> RowEstimator {
        match self.mode {
            Mode::MinimalNEqualsK => RowEstimator::DExhaustive,
            Mode::MonteCarloNGreaterK => RowEstimator::DMonteCarlo,
        }
    }

    /// Report rows in output order, without statistics.
    fn cells(&self) -> Vec<(RowEstimator, usize, usize)> {
        let mut out = Vec::new();
        match self.mode {
            Mode::MinimalNEqualsK => {
                for est in [RowEstimator::Natural, self.d_estimator()] {
                    out.extend(self.orders.iter().map(|&k| (est, k, k)));
                }
            }
            Mode::MonteCarloNGreaterK => {
                for &n in &self.sample_sizes {
                    for est in [RowEstimator::Natural, self.d_estimator()] {
                        out.extend(self.orders.iter().map(|&k| (est, n, k)));
                    }
                }
            }
        }
        out
    }

    /// Estimates of one replication, in [`Self::cells`] order.
    fn replicate(&self, r: u64) -> Vec<f64> {
        let n_orders = self.orders.len();
        let mut out = vec![0.0; 2 * self.groups().iter().map(|(_, o)| o.len()).sum::<usize>()];
        let mut sample = Vec::new();
        for (g, (n, orders)) in self.groups().into_iter().enumerate() {
            let group = n as u16;
            sample.resize(n, 0.0);
            self.distribution
                .fill(&mut RngStream::for_replication(self.seed, r, group, 0).rng(), &mut sample);
            for (j, &k) in orders.iter().enumerate() {
                let (nat_at, d_at) = match self.mode {
                    Mode::MinimalNEqualsK => (g, n_orders + g),
                    Mode::MonteCarloNGreaterK => (2 * g * n_orders + j, (2 * g + 1) * n_orders + j),
                };
                out[nat_at] = natural_raw(&sample, k, self.divisor);
                out[d_at] = match self.mode {
                    Mode::MinimalNEqualsK => symmetrized_unchecked(&sample),
                    Mode::MonteCarloNGreaterK => {
                        let mut rng = RngStream::for_replication(self.seed, r, group, 1 + k as u8).rng();
                        mc_raw(&sample, k, self.mc_tuples, &mut rng).0
                    }
                };
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowEstimator {
    Natural,
    DExhaustive,
    DMonteCarlo,
}

impl RowEstimator {
    pub fn name(self) -> &'static str {
        match self {
            RowEstimator::Natural => "natural",
            RowEstimator::DExhaustive => "d-exhaustive",
            RowEstimator::DMonteCarlo => "d-monte-carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub estimator: RowEstimator,
    pub n: usize,
    pub order: usize,
    pub true_value: f64,
    pub mean_bias: f64,
    pub std_error: f64,
    pub replications: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub distribution: String,
    pub mode: Mode,
    pub seed: u64,
    pub replications: u64,
    pub mc_tuples: Option<u64>,
    pub rows: Vec<BiasRow>,
}

impl BiasReport {
    pub fn row(&self, estimator: RowEstimator, n: usize, order: usize) -> Option<&BiasRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.n == n && r.order == order)
    }
}

/// Runs the experiment on the ambient rayon pool.
pub fn run_bias_experiment(config: &ExperimentConfig) -> Result<BiasReport> {
    config.validate()?;
    let cells = config.cells();
    let truth: Vec<f64> = cells.iter().map(|&(_, _, k)| config.distribution.central_moment(k as u32)).collect();
    let mut s1 = vec![NeumaierSum::new(); cells.len()];
    let mut s2 = vec![NeumaierSum::new(); cells.len()];
    let mut start = 0;
    while start < config.replications {
        let end = (start + CHUNK).min(config.replications);
        let chunk: Vec<Vec<f64>> = (start..end).into_par_iter().map(|r| config.replicate(r)).collect();
        for est in &chunk {
            for (i, &v) in est.iter().enumerate() {
                let b = v - truth[i];
                s1[i].add(b);
                s2[i].add(b * b);
            }
        }
        start = end;
    }
    let r = config.replications as f64;
    let rows = cells
        .iter()
        .enumerate()
        .map(|(i, &(estimator, n, order))| {
            let mean_bias = s1[i].value() / r;
            let var = if config.replications > 1 {
                ((s2[i].value() - s1[i].value() * mean_bias) / (r - 1.0)).max(0.0)
            } else {
                0.0
            };
            BiasRow {
                estimator,
                n,
                order,
                true_value: truth[i],
                mean_bias,
                std_error: (var / r).sqrt(),
                replications: config.replications,
            }
        })
        .collect();
    Ok(BiasReport {
        distribution: config.distribution.label(),
        mode: config.mode,
        seed: config.seed,
        replications: config.replications,
        mc_tuples: (config.mode == Mode::MonteCarloNGreaterK).then_some(config.mc_tuples),
        rows,
    })
}

/// Runs the experiment on a dedicated pool of `threads` workers.
pub fn run_bias_experiment_on(config: &ExperimentConfig, threads: usize) -> Result<BiasReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_bias_experiment(config))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
    Md,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "md" | "markdown" => Ok(Format::Md),
            other => Err(Error::Parse(format!("unknown format `{other}` (csv, json, md)"))),
        }
    }
}

/// Renders a report. CSV columns: `estimator,n,order,true_value,mean_bias,std_error,replications`.
pub fn summarize(report: &BiasReport, format: Format) -> Result<String> {
    if report.rows.is_empty() {
        return Err(Error::Config("empty report".into()));
    }
    match format {
        Format::Json => serde_json::to_string_pretty(report).map_err(|e| Error::Parse(e.to_string())),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &report.rows {
                w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
        }
        Format::Md => Ok(markdown(report)),
    }
}

/// Parses a JSON rendering back into a report.
pub fn parse_report(json: &str) -> Result<BiasReport> {
    serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))
}

fn markdown(report: &BiasReport) -> String {
    let mut orders: Vec<usize> = report.rows.iter().map(|r| r.order).collect();
    orders.sort_unstable();
    orders.dedup();
    let minimal = report.mode == Mode::MinimalNEqualsK;

    let mut out = String::new();
    let _ = writeln!(out, "Bias for {} (R = {}, seed = {})\n", report.distribution, report.replications, report.seed);
    let _ = write!(out, "| |");
    for k in &orders {
        let _ = write!(out, " Ord. {k} |");
    }
    let _ = write!(out, "\n|---|");
    for _ in &orders {
        let _ = write!(out, "---:|");
    }
    out.push('\n');
    if minimal {
        let _ = write!(out, "| n |");
        for k in &orders {
            let _ = write!(out, " {k} |");
        }
        out.push('\n');
    }
    let _ = write!(out, "| true value |");
    for &k in &orders {
        let tv = report.rows.iter().find(|r| r.order == k).map(|r| r.true_value).unwrap_or(f64::NAN);
        let _ = write!(out, " {tv} |");
    }
    out.push('\n');

    let mut keys: Vec<(RowEstimator, Option<usize>)> = Vec::new();
    for r in &report.rows {
        let key = (r.estimator, (!minimal).then_some(r.n));
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (est, n) in keys {
        match n {
            Some(n) => {
                let _ = write!(out, "| {} (n={n}) |", est.name());
            }
            None => {
                let _ = write!(out, "| {} |", est.name());
            }
        }
        for &k in &orders {
            let cell = report
                .rows
                .iter()
                .find(|r| r.estimator == est && r.order == k && n.is_none_or(|n| r.n == n));
            match cell {
                Some(r) => {
                    let _ = write!(out, " {:.3} ± {:.3} |", r.mean_bias, r.std_error);
                }
                None => out.push_str(" |"),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn combined(a: &BiasRow, b: &BiasRow) -> f64 {
    a.std_error.hypot(b.std_error)
}

/// Statistical invariants of a finished report.
///
/// Always checked: D-estimator biases within 5 standard errors (Table-1
/// mode). For exponential data additionally: the natural estimator's
/// negative bias at orders ≥ 3 (Table-1 mode); D-MC dominance and the
/// natural estimator's shrinking bias as `n` grows (Table-2 mode).
pub fn check_invariants(config: &ExperimentConfig, report: &BiasReport) -> Vec<InvariantCheck> {
    let exponential = matches!(config.distribution, DistributionSpec::Exponential { .. });
    let mut checks = Vec::new();
    let mut push = |name: String, passed: bool, detail: String| checks.push(InvariantCheck { name, passed, detail });
    match config.mode {
        Mode::MinimalNEqualsK => {
            for r in &report.rows {
                let slack = 1e-12 * r.true_value.abs().max(1.0);
                match r.estimator {
                    RowEstimator::Natural if exponential && r.order >= 3 => push(
                        format!("natural bias negative, order {}", r.order),
                        r.mean_bias < -5.0 * r.std_error,
                        format!("bias {:.6}, se {:.6}", r.mean_bias, r.std_error),
                    ),
                    RowEstimator::Natural => {}
                    _ => push(
                        format!("d-estimator unbiased, order {}", r.order),
                        r.mean_bias.abs() <= 5.0 * r.std_error + slack,
                        format!("bias {:.6}, se {:.6}", r.mean_bias, r.std_error),
                    ),
                }
            }
        }
        Mode::MonteCarloNGreaterK if exponential => {
            let high: Vec<usize> = config.orders.iter().copied().filter(|&k| k >= 3).collect();
            for &n in &config.sample_sizes {
                let mut wins = 0;
                let mut losses_ok = true;
                for &k in &high {
                    let (Some(nat), Some(d)) =
                        (report.row(RowEstimator::Natural, n, k), report.row(RowEstimator::DMonteCarlo, n, k))
                    else {
                        continue;
                    };
                    if d.mean_bias.abs() < nat.mean_bias.abs() {
                        wins += 1;
                    } else if d.mean_bias.abs() - nat.mean_bias.abs() > 2.0 * combined(nat, d) {
                        losses_ok = false;
                    }
                }
                push(
                    format!("d-mc dominance, n = {n}"),
                    2 * wins > high.len() && losses_ok,
                    format!("{wins} of {} orders", high.len()),
                );
            }
            let mut sizes = config.sample_sizes.clone();
            sizes.sort_unstable();
            for pair in sizes.windows(2) {
                for &k in &high {
                    let (Some(small), Some(large)) =
                        (report.row(RowEstimator::Natural, pair[0], k), report.row(RowEstimator::Natural, pair[1], k))
                    else {
                        continue;
                    };
                    push(
                        format!("natural bias shrinks, order {k}, n {} -> {}", pair[0], pair[1]),
                        large.mean_bias.abs() <= small.mean_bias.abs() + 2.0 * combined(small, large),
                        format!("{:.6} -> {:.6}", small.mean_bias, large.mean_bias),
                    );
                }
            }
        }
        Mode::MonteCarloNGreaterK => {}
    }
    checks
}
