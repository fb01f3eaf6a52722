//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! `cargo test --test acceptance -- 3 8` runs a subset.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use dmoments::distributions::DistributionSpec;
use dmoments::estimators::{d_estimator_exhaustive, Sample};
use dmoments::exact::{ExactEngine, FiniteDistribution, FiniteJoint, IdentityId, IdentityInput, DEFAULT_TOLERANCE};
use dmoments::identities::{NumericIdentity, CAUCHY_SCHWARZ_SLACK};
use dmoments::kernels::{kernel_h, kernel_mu_bar, KernelKind};
use dmoments::rng::RngStream;
use dmoments::simulation::{run_bias_experiment, run_bias_experiment_on, BiasReport, ExperimentConfig, RowEstimator};
use dmoments::sum::NeumaierSum;

/// Seed of every randomized criterion. Fixed before the first run.
const SEED: u64 = 7;

/// Reference natural-estimator bias at `n = k` for Exponential(2), orders 3–8,
/// estimated there from 2·10⁷ replications.
const REFERENCE_NATURAL_T1: [f64; 6] = [-0.167, -0.258, -0.768, -2.171, -8.321, -33.739];
const REFERENCE_REPLICATIONS_T1: f64 = 2e7;

/// Reference Table-2 cells (natural, D-MC) at n = 50 and n = 100, orders 3–8.
const REFERENCE_T2: [(usize, [f64; 6], [f64; 6]); 2] = [
    (50, [-0.018, -0.059, -0.240, -0.921, -5.203, -27.483], [-0.009, -0.035, -0.162, -0.592, -4.048, -22.484]),
    (100, [-0.008, -0.020, -0.084, -0.295, -2.621, -16.574], [-0.003, -0.005, -0.035, -0.133, -1.991, -13.020]),
];

struct Verdict {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

fn exp2() -> DistributionSpec {
    DistributionSpec::exponential(2.0).unwrap()
}

fn table1_config() -> ExperimentConfig {
    ExperimentConfig::table1(exp2(), SEED)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Every catalog entry on 100 random distributions with support 2..=6.
fn criterion_1() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for (g, id) in IdentityId::ALL.into_iter().enumerate() {
        let started = Instant::now();
        let mut failed = 0;
        let mut worst = 0f64;
        for t in 0..100u64 {
            let mut rng = RngStream::for_replication(SEED, t, g as u16, 0).rng();
            let support = 2 + (t as usize % 5);
            let input = IdentityInput::new(FiniteJoint::random(&mut rng, support, id.dimension()));
            match id.verify(&input, DEFAULT_TOLERANCE) {
                Ok(rep) => {
                    worst = worst.max(rep.max_rel_diff());
                    if !rep.passed() {
                        failed += 1;
                        if failed == 1 {
                            for c in rep.failures() {
                                details.push(format!("  {id} trial {t}: {} lhs {} rhs {}", c.label, c.lhs, c.rhs));
                            }
                        }
                    }
                }
                Err(e) => {
                    failed += 1;
                    details.push(format!("  {id} trial {t}: {e}"));
                }
            }
        }
        pass &= failed == 0;
        details.push(format!(
            "  {:<22} 100 distributions, {failed} failed, max rel diff {worst:.2e} ({:.1}s)",
            id.name(),
            started.elapsed().as_secs_f64()
        ));
    }
    Verdict { pass, summary: format!("{} catalog entries x 100 random distributions", IdentityId::ALL.len()), details }
}

/// `E{d_estimator_exhaustive(X₁..X_n, k)} = μ_k` by enumerating all `n`-tuples.
fn criterion_2() -> Verdict {
    let dist = FiniteDistribution::new(vec![-1.0, 0.5, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
    let engine = ExactEngine::default();
    let mut pass = true;
    let mut details = Vec::new();
    for (n, k) in [(2, 2), (3, 3), (4, 4), (5, 4), (4, 3)] {
        let e = engine
            .expect_iid(&dist, n, |x| d_estimator_exhaustive(&Sample::new(x.to_vec()).unwrap(), k).unwrap().value)
            .unwrap();
        let mu = dist.central_moment(k as u32);
        let ok = (e - mu).abs() <= 1e-9 * mu.abs().max(1.0);
        pass &= ok;
        details.push(format!("  n={n} k={k}: E = {e:.15}, mu_k = {mu:.15}, diff {:.1e}", (e - mu).abs()));
    }
    Verdict { pass, summary: "exhaustive D-estimator exactly unbiased on a 3-point law".into(), details }
}

fn criterion_3(report: &BiasReport) -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    let order6 = report.row(RowEstimator::Natural, 6, 6).unwrap().true_value;
    pass &= order6 == 4.140625;
    details.push(format!("  true value at order 6: {order6}"));
    let scale = (report.replications as f64 / REFERENCE_REPLICATIONS_T1).sqrt();
    for (i, &cell) in REFERENCE_NATURAL_T1.iter().enumerate() {
        let k = i + 3;
        let r = report.row(RowEstimator::Natural, k, k).unwrap();
        let se = r.std_error.hypot(r.std_error * scale);
        let z = (r.mean_bias - cell) / se;
        let ok = z.abs() <= 5.0;
        pass &= ok;
        details.push(format!(
            "  natural k={k}: bias {:.4} (se {:.4}) vs reference {cell:.3}, z = {z:+.2}{}",
            r.mean_bias,
            r.std_error,
            if ok { "" } else { "  <-- outside 5 SE" }
        ));
    }
    for k in 2..=8 {
        let r = report.row(RowEstimator::DExhaustive, k, k).unwrap();
        let z = r.mean_bias / r.std_error;
        let ok = z.abs() <= 5.0;
        pass &= ok;
        details.push(format!(
            "  D k={k}: bias {:.4} (se {:.4}), z = {z:+.2}{}",
            r.mean_bias,
            r.std_error,
            if ok { "" } else { "  <-- outside 5 SE" }
        ));
    }
    Verdict {
        pass,
        summary: format!("Table 1 at n = k, Exponential(2), R = {}", report.replications),
        details,
    }
}

fn criterion_4() -> Verdict {
    let report = run_bias_experiment(&ExperimentConfig::table2(exp2(), SEED)).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for (n, ref_nat, ref_d) in REFERENCE_T2 {
        let mut wins = 0;
        for k in 3..=8 {
            let nat = report.row(RowEstimator::Natural, n, k).unwrap();
            let d = report.row(RowEstimator::DMonteCarlo, n, k).unwrap();
            let win = d.mean_bias.abs() < nat.mean_bias.abs();
            wins += usize::from(win);
            details.push(format!(
                "  n={n} k={k}: natural {:+.4} (se {:.4}), D-MC {:+.4} (se {:.4}){}   reference {:+.3} / {:+.3}",
                nat.mean_bias,
                nat.std_error,
                d.mean_bias,
                d.std_error,
                if win { "" } else { "  <-- D-MC not smaller" },
                ref_nat[k - 3],
                ref_d[k - 3],
            ));
        }
        pass &= wins >= 5;
        details.push(format!("  n={n}: D-MC smaller at {wins} of 6 orders"));
    }
    Verdict {
        pass,
        summary: format!("Table 2 direction, n in {{50, 100}}, R = {}, N = {}", report.replications, 30_000),
        details,
    }
}

fn criterion_5() -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for (g, id) in NumericIdentity::ALL.into_iter().enumerate() {
        let mut failed = 0;
        let mut worst = 0f64;
        let mut min_lhs = f64::INFINITY;
        for t in 0..1000u64 {
            let mut rng = RngStream::for_replication(SEED, t, 32 + g as u16, 0).rng();
            let n = rng.random_range(2..=1000);
            let rep = id.check_random(&mut rng, n).unwrap();
            worst = worst.max(rep.max_rel_diff());
            failed += usize::from(!rep.passed());
            if id == NumericIdentity::Lagrange {
                min_lhs = min_lhs.min(rep.comparisons[0].lhs);
            }
        }
        pass &= failed == 0;
        let extra = if id == NumericIdentity::Lagrange {
            pass &= min_lhs >= -CAUCHY_SCHWARZ_SLACK;
            format!(", min lhs {min_lhs:.3e}")
        } else {
            String::new()
        };
        details.push(format!("  {:<16} 1000 instances, {failed} failed, max rel diff {worst:.2e}{extra}", id.name()));
    }
    Verdict { pass, summary: "numeric identities on random vectors, n in [2, 1000]".into(), details }
}

/// Scale of a degree-`k` kernel on `x`: `(max x − min x)^k`.
fn kernel_scale(x: &[f64], k: usize) -> f64 {
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - lo).powi(k as i32)
}

const GRID: i64 = 1 << 20;

fn criterion_6() -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for (g, kind) in [KernelKind::H, KernelKind::MuBar, KernelKind::MuTilde].into_iter().enumerate() {
        for k in 2..=10usize {
            if kind == KernelKind::MuTilde && k % 2 == 1 {
                continue;
            }
            let mut worst_shift = 0f64;
            let mut worst_scale = 0f64;
            for t in 0..1000u64 {
                let mut rng = RngStream::for_replication(SEED, t, 128 + (g * 16 + k) as u16, 0).rng();
                // Points, shifts and scales live on a dyadic grid so that x + c and
                // λx are exact; otherwise rounding the inputs alone moves a pairwise
                // difference by about eps·|c|/|x_i − x_j|, whatever the kernel does.
                let x: Vec<f64> = (0..k).map(|_| rng.random_range(-GRID..=GRID) as f64 / GRID as f64).collect();
                let c = rng.random_range(-10 * GRID..=10 * GRID) as f64 / GRID as f64;
                let lambda = rng.random_range(4..=64) as f64 / 16.0;
                let base = kind.eval(k, &x).unwrap();
                let shifted = kind.eval(k, &x.iter().map(|v| v + c).collect::<Vec<_>>()).unwrap();
                let scaled = kind.eval(k, &x.iter().map(|v| lambda * v).collect::<Vec<_>>()).unwrap();
                let s = kernel_scale(&x, k);
                worst_shift = worst_shift.max((shifted - base).abs() / s.max(base.abs()));
                let expected = lambda.powi(k as i32) * base;
                worst_scale = worst_scale.max((scaled - expected).abs() / (lambda.powi(k as i32) * s).max(expected.abs()));
            }
            let ok = worst_shift <= 1e-12 && worst_scale <= 1e-12;
            pass &= ok;
            details.push(format!(
                "  {} k={k}: translation {worst_shift:.2e}, homogeneity {worst_scale:.2e}{}",
                kind.name(),
                if ok { "" } else { "  <-- above 1e-12" }
            ));
        }
    }
    let engine = ExactEngine::default();
    let mut worst = 0f64;
    for t in 0..20u64 {
        let mut rng = RngStream::for_replication(SEED, t, 1000, 0).rng();
        let size = 2 + (t as usize % 3);
        let joint = FiniteJoint::random(&mut rng, size, 1);
        let dist = joint.marginal(0).unwrap();
        for k in 2..=6 {
            let eh = engine.expect_iid(&dist, k, |x| kernel_h(k, x).unwrap()).unwrap();
            let em = engine.expect_iid(&dist, k, |x| kernel_mu_bar(k, x).unwrap()).unwrap();
            let mu = dist.central_moment(k as u32);
            worst = worst.max(rel(eh, em)).max(rel(eh, mu));
        }
    }
    let ok = worst <= DEFAULT_TOLERANCE;
    pass &= ok;
    details.push(format!("  E h_k = E mu-bar_k = mu_k, k <= 6, 20 distributions: max rel diff {worst:.2e}"));
    Verdict { pass, summary: "kernel translation invariance, homogeneity and cross-oracle".into(), details }
}

fn criterion_7() -> Verdict {
    let spec = exp2();
    let draws = 10_000_000usize;
    let mut x = vec![0.0; draws];
    spec.fill(&mut RngStream::new(SEED, 0x7777).rng(), &mut x);
    let mean = spec.mean();
    let mut pass = true;
    let mut details = Vec::new();
    for k in 2..=8 {
        let mut s1 = NeumaierSum::new();
        let mut s2 = NeumaierSum::new();
        for &v in &x {
            let p = (v - mean).powi(k);
            s1.add(p);
            s2.add(p * p);
        }
        let n = draws as f64;
        let m = s1.value() / n;
        let se = ((s2.value() / n - m * m) * n / (n - 1.0) / n).sqrt();
        let truth = spec.central_moment(k as u32);
        let z = (m - truth) / se;
        let ok = z.abs() <= 5.0;
        pass &= ok;
        details.push(format!("  k={k}: closed form {truth}, Monte Carlo {m:.6} (se {se:.2e}), z = {z:+.2}"));
    }
    Verdict { pass, summary: "Exponential(2) closed-form moments vs 10^7 draws".into(), details }
}

fn criterion_8(first: &BiasReport) -> Verdict {
    let cfg = table1_config();
    let one = run_bias_experiment_on(&cfg, 1).unwrap();
    let two = run_bias_experiment_on(&cfg, 2).unwrap();
    let same = |a: &BiasReport, b: &BiasReport| {
        a.rows.len() == b.rows.len()
            && a.rows.iter().zip(&b.rows).all(|(p, q)| {
                p.mean_bias.to_bits() == q.mean_bias.to_bits() && p.std_error.to_bits() == q.std_error.to_bits()
            })
    };
    let pass = same(&one, &two) && same(&one, first) && one == two;
    Verdict {
        pass,
        summary: "Table 1 experiment bit-identical with 1 and 2 threads".into(),
        details: vec![format!("  {} rows compared bit for bit across three runs", one.rows.len())],
    }
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |c: u32| selected.is_empty() || selected.contains(&c);

    let mut table1: Option<BiasReport> = None;
    let mut table1_report = || -> BiasReport {
        table1.get_or_insert_with(|| run_bias_experiment(&table1_config()).unwrap()).clone()
    };

    let mut results: Vec<(u32, Verdict, f64)> = Vec::new();
    for c in 1..=8u32 {
        if !want(c) {
            continue;
        }
        let start = Instant::now();
        let verdict = match c {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(&table1_report()),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            _ => criterion_8(&table1_report()),
        };
        let secs = start.elapsed().as_secs_f64();
        for line in &verdict.details {
            println!("{line}");
        }
        println!("criterion {c}: {} ({}; {secs:.1}s)", if verdict.pass { "PASS" } else { "FAIL" }, verdict.summary);
        results.push((c, verdict, secs));
    }

    println!();
    let failed: Vec<u32> = results.iter().filter(|(_, v, _)| !v.pass).map(|(c, _, _)| *c).collect();
    for (c, v, secs) in &results {
        println!("criterion {c}: {} [{secs:.1}s]", if v.pass { "PASS" } else { "FAIL" });
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
