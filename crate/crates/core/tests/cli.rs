use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const T: &str = r#"{"space":{"kind":"classical","n":2},"matrix":[[0.9,0.2],[0.1,0.8]]}"#;
const S: &str = r#"{"space":{"kind":"classical","n":2},"matrix":[[0.88,0.215],[0.12,0.785]]}"#;
const RANK_ONE: &str = r#"{"space":{"kind":"classical","n":2},"matrix":[[0.5,0.5],[0.5,0.5]]}"#;
const NOT_MARKOV: &str = r#"{"space":{"kind":"classical","n":2},"matrix":[[0.5,-0.2],[0.5,1.2]]}"#;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn dobrushin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dobrushin"))
        .args(args)
        .current_dir(dir)
        .env("DOBRUSHIN_THREADS", "1")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_kind(out: &Output) -> String {
    let line = String::from_utf8_lossy(&out.stderr).lines().filter(|l| l.starts_with("{\"error\"")).last().unwrap().to_owned();
    let v: Value = serde_json::from_str(&line).unwrap();
    v["error"]["kind"].as_str().unwrap().to_owned()
}

fn close(v: &Value, expected: f64, tol: f64) -> bool {
    (v.as_f64().unwrap() - expected).abs() <= tol
}

#[test]
fn analyze_worked_operator() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "t.json", T);
    let out = dobrushin(&["analyze", "t.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["classification"], "UniformlyAsymptoticallyStable");
    assert_eq!(v["n0"], 1);
    assert!(close(&v["rho"], 0.7, 1e-12));
    assert!(close(&v["C"], 2.0 / 0.7, 1e-12));
    assert_eq!(v["n_tilde"], 3);
    assert!(close(&v["fixed_point"]["coords"][0], 2.0 / 3.0, 1e-10));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"resolved_config\""));
}

#[test]
fn bounds_on_worked_pair() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "t.json", T);
    write(dir.path(), "s.json", S);
    let out = dobrushin(&["bounds", "t.json", "s.json", "--m", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(close(&v["norm_TS"], 0.04, 1e-12));
    assert!(close(&v["bounds"]["eq9"], 0.13333, 1e-5));
    assert!(close(&v["bounds"]["per62"], 0.15385, 1e-5));
    assert!(close(&v["actual_stationary_distance"], 0.049751, 1e-5));
    for (name, check) in v["soundness"].as_object().unwrap() {
        assert_eq!(check["violations"], 0, "{name}");
    }
}

#[test]
fn transfer_on_worked_pair() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "t.json", T);
    write(dir.path(), "s.json", S);
    let out = dobrushin(&["transfer", "t.json", "s.json", "--m", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["transfer"]["verdict"], "Applies");
    assert!(close(&v["transfer"]["margin"], 0.26, 1e-12));
    assert!(close(&v["transfer"]["z0"]["coords"][0], 43.0 / 67.0, 1e-10));
}

#[test]
fn delta_of_rank_one_is_certified_zero() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "r.json", RANK_ONE);
    let out = dobrushin(&["delta", "r.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["value"], 0.0);
    assert_eq!(v["certified"], true);
}

#[test]
fn delta_of_powers_and_means() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "t.json", T);
    let out = dobrushin(&["delta", "t.json", "--power", "2"], dir.path());
    assert!(close(&json(&out)["value"], 0.49, 1e-12));
    let out = dobrushin(&["delta", "t.json", "--cesaro", "2"], dir.path());
    assert!(close(&json(&out)["value"], 0.85, 1e-12));
}

#[test]
fn exit_statuses() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "bad.json", NOT_MARKOV);
    write(dir.path(), "junk.json", "not json");
    write(dir.path(), "r.json", RANK_ONE);

    let out = dobrushin(&["analyze", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "precondition");

    let out = dobrushin(&["analyze", "junk.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "malformed");

    let out = dobrushin(&["analyze", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = dobrushin(&["delta", "r.json", "--delta-upper", "0.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");

    let out = dobrushin(&["suite", "--space", "simplex:3"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = dobrushin(&["transfer", "r.json", "r.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn experiment_is_deterministic_and_writes_csv() {
    let dir = TempDir::new().unwrap();
    let args = ["--format", "csv", "experiment", "tightness", "--trials", "3", "--magnitudes", "0.1,0.5", "--seed", "9"];
    let first = dobrushin(&args, dir.path());
    let second = dobrushin(&args, dir.path());
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let mut threaded = vec!["--threads", "3"];
    threaded.extend(args);
    assert_eq!(dobrushin(&threaded, dir.path()).stdout, first.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.starts_with("space,magnitude,trial,"));
    assert_eq!(text.lines().count(), 1 + 2 * 3);

    let mut with_output = args.to_vec();
    with_output.extend(["-o", "rows.csv"]);
    let out = dobrushin(&with_output, dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert_eq!(fs::read_to_string(dir.path().join("rows.csv")).unwrap(), text);
}

#[test]
fn suite_reports_failures_as_data() {
    let dir = TempDir::new().unwrap();
    let out = dobrushin(&["suite", "--space", "classical:3", "--trials", "4", "--groups", "operators"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["passed"], true);

    let out = dobrushin(
        &["suite", "--space", "classical:3", "--trials", "4", "--groups", "operators", "--inject-fault"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["records"].as_array().unwrap().iter().any(|r| r["expected_failures"].as_u64().unwrap() > 0));
}
