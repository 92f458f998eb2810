use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heatforms"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL_FLAT: &str = r#"{
  "name": "small-flat",
  "metric": {"builtin": "flat-torus", "dim": 2},
  "resolution": 16,
  "p": [0, 1],
  "k": [0, 1],
  "r": [2],
  "order": 2,
  "nodes": 16,
  "times": {"short_count": 4, "long_max": 4.0, "long_count": 3},
  "compare_times": [0.5, 1.0]
}"#;

#[test]
fn kernel_check_passes_with_expected_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["kernel-check", "--n", "1", "--r", "1", "--gamma", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "PASS");
    let doc = read_json(&dir.path().join("kernel-check.json"));
    assert_eq!(doc["pass"], Value::Bool(true));
    let slope = doc["result"]["slope"].as_f64().unwrap();
    assert!((slope + 0.5).abs() < 1e-6, "slope {slope}");
    assert!(!dir.path().join("failures.json").exists());
}

#[test]
fn kernel_check_rejects_mismatched_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["kernel-check", "--n", "2", "--r", "2", "--gamma", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_exponent_is_a_usage_error() {
    let out = run(&["kernel-check", "--n", "1", "--r", "0.5", "--gamma", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cover_passes_on_flat_torus() {
    let dir = tempfile::tempdir().unwrap();
    let scen = scenarios().join("flat-torus.json");
    let out = run(&["cover", "--scenario", scen.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("cover.json"));
    assert_eq!(doc["result"]["disjoint"], Value::Bool(true));
    assert_eq!(doc["result"]["covers"], Value::Bool(true));
    assert!(dir.path().join("cover.csv").exists());
}

#[test]
fn malformed_scenario_names_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(
        dir.path(),
        r#"{"name": "x", "metric": {"builtin": "flat-torus"}, "resolution": 16, "eps": "small"}"#,
    );
    let out = run(&["cover", "--scenario", scen.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("eps"), "{err}");
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(
        dir.path(),
        r#"{"name": "x", "metric": {"builtin": "flat-torus"}, "resolution": 16, "epsilon": 0.1}"#,
    );
    let out = run(&["radius", "--scenario", scen.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilon"));
}

#[test]
fn out_of_range_resolution_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(dir.path(), r#"{"name": "x", "metric": {"builtin": "flat-torus"}, "resolution": 4}"#);
    let out = run(&["radius", "--scenario", scen.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolution"));
}

#[test]
fn repeated_runs_are_byte_identical_and_stamped() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let scen = scenarios().join("sphere-chart.json");
    for d in [&a, &b] {
        let out = run(&["radius", "--scenario", scen.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["radius.json", "radius.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
    let doc = read_json(&a.path().join("radius.json"));
    let hash = doc["scenario_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    let csv = std::fs::read_to_string(a.path().join("radius.csv")).unwrap();
    assert!(csv.starts_with("# artifact_version="));
    assert!(csv.contains(&format!("# scenario_hash={hash}")));
}

#[test]
fn seed_override_is_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(dir.path(), SMALL_FLAT);
    let out = run(&["duhamel-compare", "--scenario", scen.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("duhamel-compare.json"));
    assert_eq!(doc["seed"], Value::from(7));
}

#[test]
fn small_sweep_passes_and_lists_its_files() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(dir.path(), SMALL_FLAT);
    let out_dir = dir.path().join("out");
    let out = run(&["sweep", "--scenario", scen.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&out_dir.join("sweep.json"));
    assert_eq!(doc["pass"], Value::Bool(true));
    let files: Vec<&str> = doc["result"]["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for f in ["radius.json", "cover.json", "duhamel-compare.json", "contraction.json", "local-check.json", "global-check.json", "classical-check.json"] {
        assert!(files.contains(&f), "missing {f}");
        assert!(out_dir.join(f).exists());
    }
}

#[test]
fn unresolved_local_ball_is_a_refusal() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write_scenario(
        dir.path(),
        r#"{"name": "coarse-perturbed", "metric": {"builtin": "perturbed-euclidean", "amplitude": 0.03},
            "resolution": 16, "p": [1], "k": [0], "r": [2]}"#,
    );
    let out = run(&["local-check", "--scenario", scen.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["exit_code"], Value::from(3));
}
