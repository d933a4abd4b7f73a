use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_fraclink");

fn interval(extra: &str) -> String {
    format!(
        r#"{{
  "domain": {{"kind": "interval", "side_lengths": [1.0]}},
  "K_max": 16,
  "nonlinearity": {{"kind": "power", "p": 3.0}}{extra}
}}"#
    )
}

fn square(extra: &str) -> String {
    format!(
        r#"{{
  "domain": {{"kind": "rectangle", "side_lengths": [1.0, 1.0]}},
  "K_max": 16,
  "nonlinearity": {{"kind": "power", "p": 3.0}}{extra}
}}"#
    )
}

fn run(dir: &Path, cmd: &str, config: &str, out: &str) -> Output {
    let path = dir.join(format!("{out}.json"));
    std::fs::write(&path, config).unwrap();
    Command::new(BIN)
        .args([cmd, "--quiet", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.join(out))
        .output()
        .unwrap()
}

fn report(dir: &Path, out: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(out).join("report.json")).unwrap()).unwrap()
}

#[test]
fn eig_writes_sorted_spectrum_deterministically() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "eig", &square(""), "a");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.path().join("a/spectrum.csv")).unwrap();
    let lambdas: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(lambdas.len(), 16);
    for (got, want) in lambdas.iter().zip([4.442882938158366, 7.024814731040727, 7.024814731040727]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!(lambdas.windows(2).all(|w| w[0] <= w[1]));

    run(d.path(), "eig", &square(""), "b");
    for file in ["basis.json", "spectrum.csv", "report.json"] {
        let a = std::fs::read(d.path().join("a").join(file)).unwrap();
        let b = std::fs::read(d.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn small_truncation_is_a_config_error_with_line() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "eig", &square("").replace("\"K_max\": 16", "\"K_max\": 0"), "a");
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("K_max"), "{err}");
}

#[test]
fn quadratic_exponent_is_rejected() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "eig", &square("").replace("\"p\": 3.0", "\"p\": 2.0"), "a");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_key_is_rejected() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), "eig", &square(",\n  \"bogus\": 1"), "a");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn multiplicity_rejects_first_eigenvalue() {
    let d = TempDir::new().unwrap();
    let cfg = square(",\n  \"lambda_sweep\": {\"eigen_index\": 1, \"delta_list\": [0.1]}");
    let o = run(d.path(), "multiplicity", &cfg, "a");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 5"));
}

#[test]
fn multiplicity_with_empty_list_succeeds() {
    let d = TempDir::new().unwrap();
    let cfg = square(",\n  \"lambda_sweep\": {\"eigen_index\": 2, \"delta_list\": []}");
    let o = run(d.path(), "multiplicity", &cfg, "a");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(report(d.path(), "a")["result"]["rows"].as_array().unwrap().len(), 0);
}

#[test]
fn solve_below_first_eigenvalue_uses_mountain_pass() {
    let d = TempDir::new().unwrap();
    let cfg = interval(",\n  \"lambda\": 0.0");
    let o = run(d.path(), "solve", &cfg, "a");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path(), "a");
    assert_eq!(r["schema"], "fraclink/1");
    let first = &r["result"][0];
    assert_eq!(first["dispatch"], "mountain_pass");
    let points = first["points"].as_array().unwrap();
    let level = points[0]["level"].as_f64().unwrap();
    assert!(level > 0.0 && level <= 3.5860 + 1e-3, "{level}");
    assert!(points.iter().all(|p| p["residual"].as_f64().unwrap() <= 1e-8));

    run(d.path(), "solve", &cfg, "b");
    for file in ["report.json", "solutions.json"] {
        let a = std::fs::read(d.path().join("a").join(file)).unwrap();
        let b = std::fs::read(d.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between runs");
    }
}

#[test]
fn solve_between_eigenvalues_uses_linking() {
    let d = TempDir::new().unwrap();
    let cfg = interval(&format!(",\n  \"lambda\": {}", 1.5 * std::f64::consts::PI));
    let o = run(d.path(), "solve", &cfg, "a");
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path(), "a");
    assert_eq!(r["result"][0]["dispatch"], "linking");
    let points = r["result"][0]["points"].as_array().unwrap();
    assert!(points.iter().any(|p| p["method"] == "linking"));
}

#[test]
fn verify_with_everything_off_is_empty() {
    let d = TempDir::new().unwrap();
    let off = r#",
  "verify": {"poincare": false, "gradient_fd": false, "hypotheses": false, "k_decay": false,
             "sweep": false, "gap": false, "nabla": false}"#;
    let o = run(d.path(), "verify", &interval(off), "a");
    assert_eq!(o.status.code(), Some(0));
    let r = report(d.path(), "a");
    assert_eq!(r["result"]["rows"].as_array().unwrap().len(), 0);
    assert_eq!(std::fs::read_to_string(d.path().join("a/checks.csv")).unwrap(), "name,parameters,measured,passed\n");
}

#[test]
fn verify_flags_linear_nonlinearity() {
    let d = TempDir::new().unwrap();
    let cfg = interval(
        r#",
  "verify": {"poincare": false, "gradient_fd": false, "hypotheses": true, "k_decay": false,
             "sweep": false, "gap": false, "nabla": false}"#,
    )
    .replace(
        r#"{"kind": "power", "p": 3.0}"#,
        r#"{"kind": "custom-table", "p": 3.0, "t": [-1.0, 0.0, 1.0], "g": [-1.0, 0.0, 1.0]}"#,
    );
    let o = run(d.path(), "verify", &cfg, "a");
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path(), "a");
    let rows = r["result"]["rows"].as_array().unwrap();
    let g5 = rows.iter().find(|row| row["name"] == "hypothesis g5").unwrap();
    assert_eq!(g5["passed"], false);
}

#[test]
fn missing_config_exits_with_config_error() {
    let o = Command::new(BIN).arg("eig").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
