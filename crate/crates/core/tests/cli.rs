mod common;

use std::path::Path;
use std::process::{Command, Output};

fn attrstress(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attrstress"))
        .arg("--out-dir")
        .arg(out)
        .arg("--data-dir")
        .arg(common::mnist_dir())
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(out: &Path, name: &str) -> String {
    std::fs::read_to_string(out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&attrstress(dir.path(), &["prop1", "--no-such-flag"])), 2);
    assert_eq!(code(&attrstress(dir.path(), &["prop1", "--pairs", "5:3"])), 2);
    assert_eq!(code(&attrstress(dir.path(), &["--help"])), 0);
}

#[test]
fn missing_and_corrupt_models() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = attrstress(dir.path(), &["explain", "--model", missing.to_str().unwrap(), "--method", "gradient"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1, \"kind\": \"linear\"}").unwrap();
    let o = attrstress(dir.path(), &["explain", "--model", bad.to_str().unwrap(), "--method", "gradient"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn counterexample_prints_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrstress(dir.path(), &["counterexample", "--random-orders", "10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(json["header"].as_str().unwrap().starts_with("attrstress "));
    let file: serde_json::Value = serde_json::from_str(&read(dir.path(), "counterexample.json")).unwrap();
    assert_eq!(json, file);
}

#[test]
fn prop1_rows_within_four_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrstress(dir.path(), &["--seed", "3", "prop1", "--pairs", "2:4,3:6,9:12,50:200", "--trials", "5000"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(dir.path(), "prop1.csv");
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# attrstress "));
    assert_eq!(lines.next().unwrap(), "n,N,closed_form,exhaustive,mc_mean,mc_stderr,trials");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let closed: f64 = r[2].parse().unwrap();
        let mean: f64 = r[4].parse().unwrap();
        let se: f64 = r[5].parse().unwrap();
        assert!((mean - closed).abs() <= 4.0 * se, "{r:?}");
        if let Ok(ex) = r[3].parse::<f64>() {
            assert!((ex - closed).abs() < 1e-12);
        }
    }
    assert_eq!(rows[1][2].parse::<f64>().unwrap(), 0.5);
}

#[test]
fn every_format_starts_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = attrstress(dir.path(), &["--seed", "9", "explain", "--model", "untrained", "--method", "gradient", "--index", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path(), "explain_gradient_4.csv");
    assert!(csv.starts_with("# attrstress "));
    assert!(csv.lines().next().unwrap().contains("seed=9"));
    let pgm = read(dir.path(), "explain_gradient_4.pgm");
    let mut l = pgm.lines();
    assert_eq!(l.next(), Some("P2"));
    assert!(l.next().unwrap().starts_with("# attrstress "));

    let o = attrstress(
        dir.path(),
        &["flipping", "--model", "untrained", "--limit", "5", "--step", "196", "--random-orders", "1"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(dir.path(), "flipping_curves.svg").starts_with("<!-- attrstress "));
    assert!(read(dir.path(), "flipping_curves.csv").starts_with("# attrstress "));
}

#[test]
fn config_file_respects_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\n\n[prop1]\npairs = [\"2:4\", \"1:3\"]\ntrials = 100\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let o = attrstress(dir.path(), &["--config", cfg, "prop1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(dir.path(), "prop1.csv");
    let header = text.lines().next().unwrap();
    assert!(header.contains("seed=5"), "{header}");
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().skip(2).all(|l| l.ends_with(",100")), "{text}");

    let o = attrstress(dir.path(), &["--config", cfg, "prop1", "--pairs", "3:6", "--seed", "8"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(dir.path(), "prop1.csv");
    assert!(text.lines().next().unwrap().contains("seed=8"));
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("3,6,") && rows[0].ends_with(",100"), "{}", rows[0]);
}
