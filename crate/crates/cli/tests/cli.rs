use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cglmp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cglmp"))
        .args(args)
        .env("CGLMP_OUTPUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn ideal_scan_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = cglmp(dir.path(), &["ideal-scan", "--nmax", "4"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("d =")).count(), 4);
    let text = fs::read_to_string(dir.path().join("ideal-scan.csv")).unwrap();
    assert!(text.starts_with("# schema_version=1\n# config={"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 4);
    let values: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!((values[0] - 2.8284271247461903).abs() < 1e-12);
    assert!(values.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn lhv_bound_prints_maximum() {
    let dir = tempfile::tempdir().unwrap();
    let out = cglmp(dir.path(), &["lhv-bound", "--d", "3"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("max = 2.000000"), "{stdout}");
    assert!(stdout.contains("A1="));
}

#[test]
fn witness_rows_end_at_4096() {
    let dir = tempfile::tempdir().unwrap();
    let out = cglmp(dir.path(), &["witness", "--fidelity", "0.982", "--nmax", "12", "--output", "w.csv"]);
    assert!(out.status.success());
    let rows = data_rows(&fs::read_to_string(dir.path().join("w.csv")).unwrap());
    assert_eq!(rows.len(), 12);
    let last = rows.last().unwrap();
    assert_eq!(last[1], "4096");
    assert_eq!(last[3], "3294");
}

#[test]
fn json_output_is_versioned() {
    let dir = tempfile::tempdir().unwrap();
    let out = cglmp(dir.path(), &["noisy-scan", "--nmax", "3", "--format", "json"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("noisy-scan.json")).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["config"]["fidelity"], 0.982);
    let results = doc["results"].as_array().unwrap();
    assert_eq!(results.len(), 3);
    let i2 = results[0]["i_d"].as_f64().unwrap();
    assert!((i2 - 2.76).abs() < 0.01);
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--nmax", "3", "--resamples", "20", "--seed", "7"];
    let run = |name: &str| {
        let mut a: Vec<&str> = args.to_vec();
        a.extend(["--output", name]);
        assert!(cglmp(dir.path(), &a).status.success());
        fs::read(dir.path().join(name)).unwrap()
    };
    let (first, second) = (run("a.csv"), run("b.csv"));
    assert_eq!(first, second);
    let mut a: Vec<&str> = args.to_vec();
    a[6] = "8";
    a.extend(["--output", "c.csv"]);
    assert!(cglmp(dir.path(), &a).status.success());
    assert_ne!(first, fs::read(dir.path().join("c.csv")).unwrap());
}

#[test]
fn tomography_record_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["tomo", "--nmax", "2", "--resamples", "5"];
    let mut a = base.to_vec();
    a.extend(["--record-out", "rec.csv", "--output", "t1.csv"]);
    assert!(cglmp(dir.path(), &a).status.success());
    let rec = dir.path().join("rec.csv");
    let rec_s = rec.to_str().unwrap();
    let mut b = base.to_vec();
    b.extend(["--record-in", rec_s, "--output", "t2.csv"]);
    assert!(cglmp(dir.path(), &b).status.success());
    let rows = |f: &str| data_rows(&fs::read_to_string(dir.path().join(f)).unwrap());
    assert_eq!(rows("t1.csv"), rows("t2.csv"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cglmp(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(cglmp(dir.path(), &["ideal-scan", "--nmax", "13"]).status.code(), Some(1));
    let bad = cglmp(dir.path(), &["noisy-scan", "--fidelity", "0.1"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(!bad.stderr.is_empty());
    assert_eq!(cglmp(dir.path(), &["lhv-bound", "--d", "64"]).status.code(), Some(2));
    assert_eq!(cglmp(dir.path(), &["angles", "--d", "6"]).status.code(), Some(2));
    assert_eq!(cglmp(dir.path(), &["--help"]).status.code(), Some(0));
    // no artifact left behind on failure
    assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
}
