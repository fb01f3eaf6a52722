use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmoments")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn moments_prints_true_values() {
    let o = run(&["moments", "--dist", "exp:2", "--orders", "2..8", "--format", "csv"]);
    assert!(o.status.success());
    let values: Vec<String> = stdout(&o).lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
    assert_eq!(values, ["0.25", "0.25", "0.5625", "1.375", "4.140625", "14.484375", "57.94140625"]);
}

#[test]
fn verify_numeric_lagrange() {
    let o = run(&["verify", "--numeric", "lagrange", "--n", "50", "--trials", "200", "--format", "csv", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("lagrange,200,200,"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed: 3"));
}

#[test]
fn verify_catalog_entry() {
    let o = run(&["verify", "--catalog", "mu4-drep", "--trials", "5", "--format", "csv", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("mu4-drep,5,5,"));
}

#[test]
fn estimate_symmetric_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    std::fs::write(&path, "value\n-1\n0\n1\n").unwrap();
    let o = run(&["estimate", "--file", path.to_str().unwrap(), "--order", "3", "--method", "d-exhaustive", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["value"], 0.0);
    assert_eq!(v[0]["tuples_used"], 6);

    let json = dir.path().join("data.json");
    std::fs::write(&json, "[0, 2]").unwrap();
    let o = run(&["estimate", "--file", json.to_str().unwrap(), "--method", "natural", "--format", "csv"]);
    assert!(stdout(&o).contains("natural,2,2.0,2,"));
}

#[test]
fn expect_on_finite_law() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    std::fs::write(&path, r#"{"support": [0, 1], "weights": [0.5, 0.5]}"#).unwrap();
    let dist = format!("finite:@{}", path.display());
    let o = run(&["expect", "--dist", &dist, "--orders", "2..5", "--odd-up-to", "7", "--format", "csv", "--check"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!stdout(&o).contains("FAIL"));

    std::fs::write(&path, r#"{"support": [0, 1], "weights": [0.5]}"#).unwrap();
    assert_eq!(run(&["expect", "--dist", &dist]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["moments", "--dist", "exp:-1"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--orders", "3..2"]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "--file", "/nonexistent.csv"]).status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let args = ["simulate", "--orders", "2..4", "--replications", "300", "--seed", "11", "--format", "json"];
    let a = run(&args);
    assert!(a.status.success());
    let b = run(&[&args[..], &["--threads", "1"]].concat());
    assert_eq!(a.stdout, b.stdout);

    std::fs::write(&out, &a.stdout).unwrap();
    let again = run(&["simulate", "--from-json", out.to_str().unwrap(), "--format", "json"]);
    assert_eq!(stdout(&again).trim_end(), stdout(&a).trim_end());

    let md = run(&["simulate", "--from-json", out.to_str().unwrap(), "--format", "md"]);
    assert!(stdout(&md).contains("| true value | 0.25 | 0.25 | 0.5625 |"));
}

#[test]
fn printed_seed_reproduces_run() {
    let args = ["simulate", "--orders", "2..3", "--replications", "100", "--format", "csv"];
    let first = run(&args);
    let err = String::from_utf8(first.stderr.clone()).unwrap();
    let seed = err.lines().find_map(|l| l.strip_prefix("seed: ")).unwrap().trim().to_string();
    let second = run(&[&args[..], &["--seed", &seed]].concat());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn simulate_check_mode_on_point_mass() {
    let o = run(&["simulate", "--dist", "point:3", "--orders", "2..5", "--replications", "50", "--seed", "1", "--check"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn simulate_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"distribution": {"kind": "normal", "mean": 0.0, "sd": 1.0}, "orders": [2, 3],
            "sample_sizes": [5], "replications": 20, "mc_tuples": 50, "seed": 4,
            "mode": "monte-carlo-n-greater-k"}"#,
    )
    .unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("estimator,n,order,true_value,mean_bias,std_error,replications"));
    assert!(text.contains("d-monte-carlo,5,3,0.0,"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed: 4"));
}
