use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TWO_ATOMS: &str = r#"{"kind": "additive", "sigma2": 0.5,
    "nu": {"atoms": [[1, 0.5], [-1, 0.5]]},
    "spikes": [[2, 1], [1.5, 1], [0, 1]], "N": 60, "seed": 3}"#;

const COVARIANCE: &str = r#"{"kind": "multiplicative", "c": 0.5,
    "nu": {"atoms": [[1, 0.5], [3, 0.5]]},
    "spikes": [[8, 1]], "N": 50, "field": "real", "entry_law": "rademacher"}"#;

fn write_spec(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn spikelab(args: &[&str], spec: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikelab"))
        .args(args)
        .arg("--spec")
        .arg(spec)
        .env("SPIKELAB_THREADS", "1")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn analyze_reports_verdicts_and_support() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "spec.json", TWO_ATOMS);
    let out = spikelab(&["analyze"], &spec);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let verdicts = report["verdicts"].as_array().unwrap();
    assert_eq!(verdicts.len(), 3);
    let outliers: Vec<bool> = verdicts.iter().map(|v| v["is_outlier"].as_bool().unwrap()).collect();
    assert_eq!(outliers, [true, false, true]);
    assert!((verdicts[0]["rho"].as_f64().unwrap() - 7.0 / 3.0).abs() < 1e-12);
    assert!(verdicts[1]["rho"].is_null());
    assert_eq!(report["support"]["intervals"].as_array().unwrap().len(), 2);

    let out = spikelab(&["analyze", "--format", "csv"], &spec);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("record,theta,multiplicity,verdict,criterion,rho,tau,lo,hi"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 9));
    assert_eq!(rows.iter().filter(|r| r[0] == "spike").count(), 3);
    assert_eq!(rows.iter().filter(|r| r[0] == "support").count(), 2);
    assert_eq!(rows[0][3], "outlier");
    assert_eq!(rows[0][5].parse::<f64>().unwrap(), 7.0 / 3.0);
    assert_eq!(rows[1][3], "sticking");
}

#[test]
fn analyze_without_spikes() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "spec.json", r#"{"kind": "multiplicative", "c": 2, "nu": {"atoms": [[1, 1]]}}"#);
    let out = spikelab(&["analyze"], &spec);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report["verdicts"].as_array().unwrap().is_empty());
    assert_eq!(report["mass_at_zero"].as_f64(), Some(0.5));
}

#[test]
fn density_writes_grid_to_file() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "spec.json", TWO_ATOMS);
    let target = dir.path().join("density.csv");
    let out = spikelab(&["density", "--grid", "-3:3:7", "--out", target.to_str().unwrap()], &spec);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&target).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,density");
    assert_eq!(lines.len(), 8);
    assert!(text.ends_with('\n') && !text.contains('\r'));
    let xs: Vec<f64> = lines[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(xs, [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
    let at_zero: f64 = lines[4].split(',').nth(1).unwrap().parse().unwrap();
    assert!(at_zero < 1e-4, "density {at_zero} inside the gap");
}

#[test]
fn density_two_point_grid() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "spec.json", COVARIANCE);
    let out = spikelab(&["density", "--grid", "0.5:4:2", "--format", "json"], &spec);
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
}

#[test]
fn density_convergence_failure_names_grid_point() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "spec.json", TWO_ATOMS);
    let out = spikelab(&["density", "--grid", "0.5:0.6:2", "--tol", "1e-300"], &spec);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("grid index 0 (x = 0.5)"), "{err}");
}

#[test]
fn invalid_specs_exit_with_status_two() {
    let dir = TempDir::new().unwrap();
    let too_small = write_spec(
        &dir,
        "rank.json",
        r#"{"kind": "additive", "sigma2": 1, "nu": {"atoms": [[0, 1]]}, "spikes": [[3, 2], [2, 2]], "N": 3}"#,
    );
    let out = spikelab(&["analyze"], &too_small);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let spec = write_spec(&dir, "spec.json", TWO_ATOMS);
    assert_eq!(spikelab(&["simulate", "--N", "2"], &spec).status.code(), Some(2));
    assert_eq!(spikelab(&["density"], &spec).status.code(), Some(2));
    assert_eq!(spikelab(&["density", "--grid", "0:1:1"], &spec).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(spikelab(&["analyze"], &missing).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "spec.json", TWO_ATOMS);
    let first = spikelab(&["simulate", "--reps", "3"], &spec);
    let second = spikelab(&["simulate", "--reps", "3"], &spec);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);
    let other_seed = spikelab(&["simulate", "--reps", "3", "--seed", "4"], &spec);
    assert_ne!(first.stdout, other_seed.stdout);

    let result: serde_json::Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(result["n"], 60);
    assert_eq!(result["reps"], 3);
    let spikes = result["spikes"].as_array().unwrap();
    assert_eq!(spikes.len(), 3);
    assert!(spikes[0]["checks"].as_array().unwrap().iter().all(|c| c["pass"].is_boolean()));
}

#[test]
fn simulate_csv_has_one_row_per_spike() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "spec.json", COVARIANCE);
    let out = spikelab(&["simulate", "--reps", "2", "--N", "40", "--format", "csv"], &spec);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(header.len(), row.len());
    assert_eq!(row[0], "40");
    assert_eq!(row[3].parse::<f64>().unwrap(), 0.5);
}
