use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn onp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onp"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn toy(dir: &Path) {
    let out = onp(&["generate", "toy4", "--out", "toy"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_toy4_has_sixteen_routes() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let routes = std::fs::read_to_string(dir.path().join("toy/routes.csv")).unwrap();
    assert_eq!(routes.lines().count(), 17);
    let run = read_json(dir.path().join("toy/run_manifest.json"));
    assert_eq!(run["command"], "generate");
    assert_eq!(run["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn generate_random_uses_a_fifth_of_the_routes_as_edges() {
    let dir = tempfile::tempdir().unwrap();
    let out = onp(&["generate", "random", "--routes", "50", "--seed", "1", "--out", "a"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("50 routes, 10 edges"));
    onp(&["generate", "random", "--routes", "50", "--seed", "1", "--out", "b"], dir.path());
    for f in ["instance.json", "routes.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
}

#[test]
fn solve_toy4_converges_on_both_paths() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let mut finals = Vec::new();
    for path in ["sparse", "dense"] {
        let out = onp(&["solve", "--instance", "toy/instance.json", "--path", path, "--out", path], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let res = read_json(dir.path().join(path).join("result.json"));
        assert_eq!(res["state"]["status"], "converged");
        assert!(res["state"]["kkt"]["feasibility"].as_f64().unwrap() <= 1e-8);
        let p: Vec<f64> = serde_json::from_value(res["state"]["p"].clone()).unwrap();
        finals.push(p);
        let trace = std::fs::read_to_string(dir.path().join(path).join("trace.csv")).unwrap();
        assert!(trace.starts_with("iter,objective,violation,kkt"));
    }
    let gap = finals[0].iter().zip(&finals[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= 1e-8, "paths differ by {gap}");
}

#[test]
fn replay_reproduces_the_result() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let out = onp(&["solve", "--instance", "toy/instance.json", "--samples", "60", "--seed", "4", "--out", "first"], dir.path());
    assert!(out.status.success());
    let out = onp(&["replay", "first/run_manifest.json", "--out", "again"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = read_json(dir.path().join("first/result.json"));
    let b = read_json(dir.path().join("again/result.json"));
    assert_eq!(a["state"]["p"], b["state"]["p"]);
    assert_eq!(a["state"]["objective"], b["state"]["objective"]);
    assert_eq!(a["samples"], 60);
}

#[test]
fn missing_instance_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = onp(&["solve", "--instance", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
    let out = onp(&["solve", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn iteration_cap_is_reported_as_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let out = onp(&["solve", "--instance", "toy/instance.json", "--max-iter", "1", "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let res = read_json(dir.path().join("s/result.json"));
    assert_eq!(res["state"]["status"], "max-iterations");
}

#[test]
fn verify_passes_on_toy4_and_accepts_a_solve_result() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path());
    let out = onp(&["verify", "--instance", "toy/instance.json", "--out", "v"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rep = read_json(dir.path().join("v/verify.json"));
    assert_eq!(rep["pass"], true);
    assert!(rep["checks"].as_array().unwrap().len() >= 10);

    onp(&["solve", "--instance", "toy/instance.json", "--out", "s"], dir.path());
    let out = onp(&["verify", "--instance", "toy/instance.json", "--point", "s/result.json", "--out", "v2"], dir.path());
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    let rep = read_json(dir.path().join("v2/verify.json"));
    let solved = read_json(dir.path().join("s/result.json"));
    assert_eq!(rep["p"], solved["state"]["p"]);
}

#[test]
fn benchmark_writes_one_row_per_size_and_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = onp(
        &["benchmark", "--routes", "50,75", "--repeats", "1", "--samples", "30", "--out", "b"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("b/benchmark.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("routes,path,median_ms,std_ms,speedup"));
    for row in &lines[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[3], "0.000000", "single repeat has zero spread");
        assert!(cols[9].parse::<f64>().unwrap() <= 1e-8);
    }
    let runs = read_json(dir.path().join("b/benchmark_runs.json"));
    assert_eq!(runs.as_array().unwrap().len(), 4);
}
