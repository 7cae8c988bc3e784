use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const PLANE: &str = "\
n = 8
m = 2
payoff.kind = power_law
payoff.theta = 0.8
payoff.lambda = 1
payoff.c = 0.75
init.kind = box
init.lo = 0
init.hi = 10
master_seed = 11
trials = 400
";

fn coalesce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coalesce"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn out_dir(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "plane.txt", PLANE);
    let (a, b) = (out_dir(tmp.path(), "a"), out_dir(tmp.path(), "b"));
    assert!(coalesce(&["simulate", "--config", &config, "--out", &a]).status.success());
    assert!(coalesce(&["simulate", "--config", &config, "--out", &b, "--workers", "1"])
        .status
        .success());
    for file in ["trials.csv", "events.csv"] {
        let x = fs::read(Path::new(&a).join(file)).unwrap();
        let y = fs::read(Path::new(&b).join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
    let config_copy = fs::read_to_string(Path::new(&a).join("config.txt")).unwrap();
    assert!(config_copy.contains("master_seed = 11"));
}

#[test]
fn different_seeds_give_different_trials() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "plane.txt", PLANE);
    let (a, b) = (out_dir(tmp.path(), "a"), out_dir(tmp.path(), "b"));
    coalesce(&["simulate", "--config", &config, "--out", &a]);
    coalesce(&["simulate", "--config", &config, "--out", &b, "--seed", "12"]);
    let x = fs::read(Path::new(&a).join("trials.csv")).unwrap();
    let y = fs::read(Path::new(&b).join("trials.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn single_trial_runs() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "plane.txt", PLANE);
    let out = out_dir(tmp.path(), "one");
    let result = coalesce(&["simulate", "--config", &config, "--out", &out, "--trials", "1"]);
    assert!(result.status.success());
    let trials = fs::read_to_string(Path::new(&out).join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 2);
}

#[test]
fn theory_for_two_agents_is_geometric() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "two.txt", &PLANE.replace("n = 8", "n = 2"));
    let out = out_dir(tmp.path(), "theory");
    assert!(coalesce(&["theory", "--config", &config, "--out", &out]).status.success());
    let table = fs::read_to_string(Path::new(&out).join("distribution.csv")).unwrap();
    let mut rows = table.lines().skip(1).map(|l| l.split(',').collect::<Vec<_>>());
    let first = rows.next().unwrap();
    assert_eq!(first[0], "1");
    let pmf: f64 = first[2].parse().unwrap();
    assert!((pmf - 0.64).abs() < 1e-12);
    let second: f64 = rows.next().unwrap()[2].parse().unwrap();
    assert!((second - 0.36 * 0.64).abs() < 1e-12);
}

#[test]
fn compare_against_own_summary_passes_loose_threshold() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "plane.txt", &PLANE.replace("trials = 400", "trials = 4000"));
    let sim = out_dir(tmp.path(), "sim");
    assert!(coalesce(&["simulate", "--config", &config, "--out", &sim]).status.success());
    let summary = Path::new(&sim).join("trials.csv");
    let out = out_dir(tmp.path(), "cmp");
    let result = coalesce(&[
        "compare",
        "--config",
        &config,
        "--out",
        &out,
        "--summary",
        summary.to_str().unwrap(),
        "--threshold",
        "0.08",
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", String::from_utf8_lossy(&result.stderr));
    let fit: serde_json::Value = serde_json::from_slice(&fs::read(Path::new(&out).join("fit.json")).unwrap()).unwrap();
    assert!(fit["tv_distance"].as_f64().unwrap() < 0.08);
    assert_eq!(fit["trials"].as_u64(), Some(4000));
}

#[test]
fn compare_with_wrong_cost_ratio_fails_gate() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "plane.txt", &PLANE.replace("trials = 400", "trials = 4000"));
    let sim = out_dir(tmp.path(), "sim");
    coalesce(&["simulate", "--config", &config, "--out", &sim]);
    let wrong = write_config(tmp.path(), "wrong.txt", &PLANE.replace("payoff.c = 0.75", "payoff.c = 0.5"));
    let summary = Path::new(&sim).join("trials.csv");
    let result = coalesce(&[
        "compare",
        "--config",
        &wrong,
        "--out",
        &out_dir(tmp.path(), "cmp"),
        "--summary",
        summary.to_str().unwrap(),
        "--threshold",
        "0.08",
    ]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn summary_with_impossible_times_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "plane.txt", PLANE);
    let summary = tmp.path().join("trials.csv");
    fs::write(&summary, "trial,k_star\n0,3\n").unwrap();
    let result = coalesce(&[
        "compare",
        "--config",
        &config,
        "--out",
        &out_dir(tmp.path(), "cmp"),
        "--summary",
        summary.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_cost_ratio() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "plane.txt", PLANE);
    let out = out_dir(tmp.path(), "sweep");
    let result = coalesce(&[
        "sweep",
        "--config",
        &config,
        "--out",
        &out,
        "--trials",
        "300",
        "--c-values",
        "0.2,0.5,0.8",
    ]);
    assert_eq!(result.status.code(), Some(0), "{}", String::from_utf8_lossy(&result.stderr));
    let table = fs::read_to_string(Path::new(&out).join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.starts_with("c,p_hat,theory_mean,empirical_mean,empirical_se,inversion"));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(coalesce(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(coalesce(&["simulate"]).status.code(), Some(2));
    let missing = tmp.path().join("missing.txt");
    assert_eq!(
        coalesce(&["simulate", "--config", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );
    let no_seed = write_config(tmp.path(), "noseed.txt", &PLANE.replace("master_seed = 11\n", ""));
    let result = coalesce(&["simulate", "--config", &no_seed, "--out", &out_dir(tmp.path(), "x")]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("master_seed"));
    let bad_c = write_config(tmp.path(), "badc.txt", &PLANE.replace("payoff.c = 0.75", "payoff.c = 1.5"));
    assert_eq!(coalesce(&["theory", "--config", &bad_c]).status.code(), Some(2));
}

#[test]
fn general_payoff_uses_bound_envelope() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "poly.txt",
        &PLANE
            .replace("payoff.kind = power_law", "payoff.kind = polynomial")
            .replace("payoff.theta = 0.8\npayoff.lambda = 1\npayoff.c = 0.75", "payoff.profit = 0, 1, 1\npayoff.cost = 0, 0.5")
            .replace("trials = 400", "trials = 2000"),
    );
    let out = out_dir(tmp.path(), "poly");
    let result = coalesce(&["compare", "--config", &config, "--out", &out]);
    assert_eq!(result.status.code(), Some(0), "{}", String::from_utf8_lossy(&result.stderr));
    assert!(Path::new(&out).join("envelope.json").exists());
    assert!(!Path::new(&out).join("fit.json").exists());
}
