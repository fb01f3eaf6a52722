use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde_json::{json, Value};

use dmoments::distributions::DistributionSpec;
use dmoments::estimators::{self, MomentEstimate, NaturalDivisor, Sample};
use dmoments::exact::{self, ExactEngine, FiniteJoint, IdentityId, IdentityInput, IdentityReport, DEFAULT_TOLERANCE};
use dmoments::identities::NumericIdentity;
use dmoments::kernels::KernelKind;
use dmoments::rng::RngStream;
use dmoments::simulation::{self, ExperimentConfig, Format, Mode};

#[derive(Parser)]
#[command(name = "dmoments", version, about = "Pairwise-difference moment kernels, exact checks and bias simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Seed for every random stream; chosen at random and printed when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Md)]
    format: OutFormat,
    /// Write the rendered output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 1 when any check fails.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
    Md,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
            OutFormat::Md => Format::Md,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check numeric identities on random vectors and the exact-expectation catalog.
    Verify(VerifyArgs),
    /// Run estimators on a data file.
    Estimate(EstimateArgs),
    /// Exact expectation of a kernel under a finite distribution.
    Expect(ExpectArgs),
    /// Bias experiments comparing natural and D-estimators.
    Simulate(SimulateArgs),
    /// Closed-form central moments.
    Moments(MomentsArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Numeric identity to check (gini-variance, gini-covariance, lagrange, binet-cauchy or all).
    #[arg(long)]
    numeric: Option<String>,
    /// Catalog entry to check, or `all`.
    #[arg(long)]
    catalog: Option<String>,
    /// Vector length for numeric identities.
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Random instances per identity.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Support size of the random catalog distributions.
    #[arg(long, default_value_t = 4)]
    support: usize,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Natural,
    DExhaustive,
    DMc,
    Pairwise,
    SkewKurt,
    Covariance,
    Beta,
}

#[derive(Args)]
struct EstimateArgs {
    /// One-column CSV (header optional) or a JSON array.
    #[arg(long)]
    file: PathBuf,
    /// Second variable for `covariance` and `beta`.
    #[arg(long)]
    with: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, value_enum, default_value_t = Method::DExhaustive)]
    method: Method,
    /// Tuples for `d-mc`.
    #[arg(long, default_value_t = 30_000)]
    tuples: u64,
    /// Use the 1/n divisor for the natural estimator.
    #[arg(long)]
    divide_by_n: bool,
    /// Cross-check O(n) formulas against their pairwise sums.
    #[arg(long)]
    verify_pairwise: bool,
}

#[derive(Args)]
struct ExpectArgs {
    /// `finite:@path.json` or `point:c`.
    #[arg(long)]
    dist: String,
    #[arg(long, value_enum, default_value_t = KernelArg::H)]
    kernel: KernelArg,
    #[arg(long, default_value = "2..4")]
    orders: String,
    /// Also check that odd moments of X₁ − X₂ vanish up to this order.
    #[arg(long)]
    odd_up_to: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    H,
    MuBar,
    MuTilde,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::H => KernelKind::H,
            KernelArg::MuBar => KernelKind::MuBar,
            KernelArg::MuTilde => KernelKind::MuTilde,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// n = k, exhaustive D-estimator.
    Minimal,
    /// n > k, Monte Carlo D-estimator.
    MonteCarlo,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment as JSON; other experiment flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-render a JSON report instead of running.
    #[arg(long, conflicts_with = "config")]
    from_json: Option<PathBuf>,
    #[arg(long)]
    dist: Option<String>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    orders: Option<String>,
    /// Comma-separated sample sizes for Monte Carlo mode.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    replications: Option<u64>,
    #[arg(long)]
    tuples: Option<u64>,
    #[arg(long)]
    divide_by_n: bool,
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(long)]
    dist: String,
    #[arg(long, default_value = "2..8")]
    orders: String,
}

/// Inclusive `a..b`, a single order, or a comma list.
fn parse_orders(s: &str) -> anyhow::Result<Vec<usize>> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().context("order range start")?;
        let b: usize = b.trim().parse().context("order range end")?;
        if a > b {
            bail!("empty order range {s}");
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|v| v.trim().parse::<usize>().with_context(|| format!("order `{v}`"))).collect()
}

fn read_values(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let Some(field) = rec.get(0).map(str::trim).filter(|f| !f.is_empty()) else {
            continue;
        };
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => {}
            Err(e) => bail!("{}: line {}: `{field}`: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

/// Flat records rendered as CSV, JSON or a markdown table.
struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn render(&self, format: OutFormat) -> anyhow::Result<String> {
        let cell = |v: &Value| match v {
            Value::String(s) => s.clone(),
            Value::Null => String::new(),
            other => other.to_string(),
        };
        Ok(match format {
            OutFormat::Json => {
                let objs: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
                    .collect();
                serde_json::to_string_pretty(&objs)?
            }
            OutFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns)?;
                for r in &self.rows {
                    w.write_record(r.iter().map(cell))?;
                }
                String::from_utf8(w.into_inner()?)?
            }
            OutFormat::Md => {
                let mut s = format!("| {} |\n|{}\n", self.columns.join(" | "), "---|".repeat(self.columns.len()));
                for r in &self.rows {
                    s.push_str(&format!("| {} |\n", r.iter().map(cell).collect::<Vec<_>>().join(" | ")));
                }
                s
            }
        })
    }
}

struct Outcome {
    text: String,
    failures: usize,
}

fn emit(common: &Common, text: &str) -> anyhow::Result<()> {
    match &common.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn effective_seed(common: &Common) -> u64 {
    let seed = common.seed.unwrap_or_else(|| rand::rng().random());
    eprintln!("seed: {seed}");
    seed
}

fn report_rows(table: &mut Table, reports: &[IdentityReport]) {
    for r in reports {
        for c in &r.comparisons {
            table.push(vec![
                json!(r.name),
                json!(c.label),
                json!(c.lhs),
                json!(c.rhs),
                json!(c.rel_diff),
                json!(if c.pass { "pass" } else { "FAIL" }),
            ]);
        }
    }
}

fn verify(args: &VerifyArgs, common: &Common) -> anyhow::Result<Outcome> {
    let seed = effective_seed(common);
    let (numeric, catalog) = match (&args.numeric, &args.catalog) {
        (None, None) => (Some("all".to_string()), Some("all".to_string())),
        (n, c) => (n.clone(), c.clone()),
    };
    let mut table = Table::new(vec!["identity", "instances", "passed", "max_rel_diff"]);
    let mut failures = 0;
    let mut failed_reports = Vec::new();

    if let Some(which) = numeric {
        let ids: Vec<NumericIdentity> =
            if which == "all" { NumericIdentity::ALL.to_vec() } else { vec![which.parse()?] };
        for (g, id) in ids.into_iter().enumerate() {
            let mut passed = 0;
            let mut worst = 0f64;
            for t in 0..args.trials {
                let mut rng = RngStream::for_replication(seed, t as u64, g as u16, 0).rng();
                let mut rep = id.check_random(&mut rng, args.n)?;
                for c in &mut rep.comparisons {
                    if c.relation == exact::Relation::Equal {
                        c.pass = c.rel_diff <= args.tolerance;
                    }
                }
                worst = worst.max(rep.max_rel_diff());
                if rep.passed() {
                    passed += 1;
                } else {
                    failed_reports.push(rep);
                }
            }
            failures += args.trials - passed;
            table.push(vec![json!(id.name()), json!(args.trials), json!(passed), json!(worst)]);
        }
    }

    if let Some(which) = catalog {
        let ids: Vec<IdentityId> = if which == "all" { IdentityId::ALL.to_vec() } else { vec![which.parse()?] };
        for (g, id) in ids.into_iter().enumerate() {
            let mut passed = 0;
            let mut worst = 0f64;
            for t in 0..args.trials {
                let mut rng = RngStream::for_replication(seed, t as u64, 64 + g as u16, 0).rng();
                let input = IdentityInput::new(FiniteJoint::random(&mut rng, args.support, id.dimension()));
                let rep = id.verify(&input, args.tolerance)?;
                worst = worst.max(rep.max_rel_diff());
                if rep.passed() {
                    passed += 1;
                } else {
                    failed_reports.push(rep);
                }
            }
            failures += args.trials - passed;
            table.push(vec![json!(id.name()), json!(args.trials), json!(passed), json!(worst)]);
        }
    }

    let mut text = table.render(common.format)?;
    if !failed_reports.is_empty() && matches!(common.format, OutFormat::Md) {
        let mut detail = Table::new(vec!["identity", "comparison", "lhs", "rhs", "rel_diff", "status"]);
        report_rows(&mut detail, &failed_reports[..failed_reports.len().min(20)]);
        text.push_str("\nFailing instances:\n\n");
        text.push_str(&detail.render(OutFormat::Md)?);
    }
    Ok(Outcome { text, failures })
}

fn estimate_row(table: &mut Table, e: &MomentEstimate, label: &str) {
    table.push(vec![json!(label), json!(e.order), json!(e.value), json!(e.tuples_used), json!(e.mc_std_error)]);
}

fn estimate(args: &EstimateArgs, common: &Common) -> anyhow::Result<Outcome> {
    let x = Sample::new(read_values(&args.file)?)?;
    let divisor = if args.divide_by_n { NaturalDivisor::N } else { NaturalDivisor::NMinusOne };
    let mut table = Table::new(vec!["estimator", "order", "value", "tuples_used", "mc_std_error"]);
    match args.method {
        Method::Natural => estimate_row(&mut table, &estimators::natural_moment_with(&x, args.order, divisor)?, "natural"),
        Method::DExhaustive => {
            estimate_row(&mut table, &estimators::d_estimator_exhaustive(&x, args.order)?, "d-exhaustive")
        }
        Method::DMc => {
            let stream = RngStream::new(effective_seed(common), 0);
            estimate_row(&mut table, &estimators::d_estimator_mc(&x, args.order, args.tuples, stream)?, "d-mc")
        }
        Method::Pairwise => {
            if args.verify_pairwise {
                estimators::gini_variance_verified(&x)?;
            }
            estimate_row(&mut table, &estimators::pairwise_variance_estimate(&x), "pairwise")
        }
        Method::SkewKurt => {
            let sk = if args.verify_pairwise {
                let fast = estimators::skewness_kurtosis_d(&x)?;
                let slow = estimators::skewness_kurtosis_d_enumerated(&x)?;
                for (name, a, b) in [("skewness", fast.skewness, slow.skewness), ("kurtosis", fast.kurtosis, slow.kurtosis)] {
                    if (a - b).abs() > estimators::ROUTE_TOLERANCE * a.abs().max(b.abs()).max(1.0) {
                        bail!("{name}: algebraic route gave {a}, pairwise route gave {b}");
                    }
                }
                fast
            } else {
                estimators::skewness_kurtosis_d(&x)?
            };
            table = Table::new(vec!["statistic", "value"]);
            table.push(vec![json!("skewness"), json!(sk.skewness)]);
            table.push(vec![json!("kurtosis"), json!(sk.kurtosis)]);
            table.push(vec![json!("excess_kurtosis"), json!(sk.excess_kurtosis)]);
        }
        Method::Covariance | Method::Beta => {
            let path = args.with.as_ref().context("--with PATH is required for covariance and beta")?;
            let y = Sample::new(read_values(path)?)?;
            let (name, value) = if args.method == Method::Beta {
                ("beta", estimators::regression_beta(&x, &y)?)
            } else if args.verify_pairwise {
                ("covariance", estimators::gini_covariance_verified(&x, &y)?)
            } else {
                ("covariance", estimators::gini_covariance(&x, &y)?)
            };
            table = Table::new(vec!["statistic", "value"]);
            table.push(vec![json!(name), json!(value)]);
        }
    }
    Ok(Outcome { text: table.render(common.format)?, failures: 0 })
}

fn expect(args: &ExpectArgs, common: &Common) -> anyhow::Result<Outcome> {
    let spec = DistributionSpec::parse(&args.dist)?;
    let DistributionSpec::Finite { dist } = &spec else {
        bail!("exact expectation needs a finite distribution (finite:@path.json or point:c)");
    };
    let kind = KernelKind::from(args.kernel);
    let engine = ExactEngine::default();
    let mut table = Table::new(vec!["kernel", "order", "expectation", "central_moment", "rel_diff", "status"]);
    let mut failures = 0;
    for k in parse_orders(&args.orders)? {
        kind.eval(k, &vec![0.0; k])?;
        let e = engine.expect_iid(dist, k, |x| kind.eval(k, x).expect("arity checked"))?;
        let mu = dist.central_moment(k as u32);
        let c = exact::Comparison::equal("", e, mu, DEFAULT_TOLERANCE);
        failures += usize::from(!c.pass);
        table.push(vec![
            json!(kind.name()),
            json!(k),
            json!(e),
            json!(mu),
            json!(c.rel_diff),
            json!(if c.pass { "pass" } else { "FAIL" }),
        ]);
    }
    if let Some(max) = args.odd_up_to {
        let rep = exact::odd_moment_symmetry_check(dist, max, DEFAULT_TOLERANCE)?;
        for c in &rep.comparisons {
            failures += usize::from(!c.pass);
            table.push(vec![
                json!("odd-difference"),
                json!(c.label),
                json!(c.lhs),
                json!(c.rhs),
                json!(c.rel_diff),
                json!(if c.pass { "pass" } else { "FAIL" }),
            ]);
        }
    }
    Ok(Outcome { text: table.render(common.format)?, failures })
}

fn simulate(args: &SimulateArgs, common: &Common) -> anyhow::Result<Outcome> {
    if let Some(path) = &args.from_json {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report = simulation::parse_report(&text)?;
        return Ok(Outcome { text: simulation::summarize(&report, common.format.into())?, failures: 0 });
    }
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let dist = DistributionSpec::parse(args.dist.as_deref().unwrap_or("exp:2"))?;
            match args.mode.unwrap_or(ModeArg::Minimal) {
                ModeArg::Minimal => ExperimentConfig::table1(dist, 0),
                ModeArg::MonteCarlo => ExperimentConfig::table2(dist, 0),
            }
        }
    };
    if args.config.is_some() {
        if let Some(d) = &args.dist {
            config.distribution = DistributionSpec::parse(d)?;
        }
        if let Some(m) = args.mode {
            config.mode = match m {
                ModeArg::Minimal => Mode::MinimalNEqualsK,
                ModeArg::MonteCarlo => Mode::MonteCarloNGreaterK,
            };
        }
    }
    if let Some(o) = &args.orders {
        config.orders = parse_orders(o)?;
    }
    if let Some(s) = &args.sizes {
        config.sample_sizes = s.clone();
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(t) = args.tuples {
        config.mc_tuples = t;
    }
    if args.divide_by_n {
        config.divisor = NaturalDivisor::N;
    }
    config.seed = match (common.seed, &args.config) {
        (Some(s), _) => s,
        (None, Some(_)) => config.seed,
        (None, None) => rand::rng().random(),
    };
    eprintln!("seed: {}", config.seed);

    let report = match common.threads {
        Some(t) => simulation::run_bias_experiment_on(&config, t)?,
        None => simulation::run_bias_experiment(&config)?,
    };
    let mut text = simulation::summarize(&report, common.format.into())?;
    let mut failures = 0;
    if common.check {
        for c in simulation::check_invariants(&config, &report) {
            failures += usize::from(!c.passed);
            eprintln!("{} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
        }
    }
    if !text.ends_with('\n') {
        text.push('\n');
    }
    Ok(Outcome { text, failures })
}

fn moments(args: &MomentsArgs, common: &Common) -> anyhow::Result<Outcome> {
    let spec = DistributionSpec::parse(&args.dist)?;
    let mut table = Table::new(vec!["order", "central_moment"]);
    for k in parse_orders(&args.orders)? {
        table.push(vec![json!(k), json!(spec.central_moment(k as u32))]);
    }
    Ok(Outcome { text: table.render(common.format)?, failures: 0 })
}

fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Verify(a) => verify(a, &cli.common),
        Command::Estimate(a) => estimate(a, &cli.common),
        Command::Expect(a) => expect(a, &cli.common),
        Command::Simulate(a) => simulate(a, &cli.common),
        Command::Moments(a) => moments(a, &cli.common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.common.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match run(&cli).and_then(|o| emit(&cli.common, &o.text).map(|_| o.failures)) {
        Ok(failures) if failures > 0 => {
            eprintln!("{failures} check(s) failed");
            if cli.common.check || matches!(cli.command, Command::Verify(_)) {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
