use std::path::Path;
use std::process::{Command, Output};

use spectral_imbalance::io::binary::{write_labels, write_matrix, Dtype, MatrixFile};
use spectral_imbalance::io::tables::Table;
use spectral_imbalance::spectral::synthetic_class_features;

fn specimb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specimb")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(dir: &Path, file: &str, col: &str) -> f64 {
    let t = Table::read(&dir.join(file)).unwrap();
    t.rows[0][t.column(col).unwrap()].parse().unwrap()
}

#[test]
fn theory_on_setting_a_with_s_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("settingA_s2.json");
    std::fs::write(&cfg, r#"{"mixture": {"setting": "A", "param": 2}}"#).unwrap();
    let out = dir.path().join("out");
    let o = specimb(&["theory", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(value(&out, "theory.csv", "poe_pos") > value(&out, "theory.csv", "poe_neg"));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn simulate_then_theory_on_the_symmetric_setting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a1.json");
    std::fs::write(&cfg, r#"{"mixture": {"setting": "A", "param": 1, "trials": 8}}"#).unwrap();
    for cmd in ["simulate", "theory"] {
        let o = specimb(&[cmd, "--config", path(&cfg), "--seed", "3", "--out", path(dir.path())]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert!(value(dir.path(), "simulate.csv", "gap") < 0.01);
    assert!(value(dir.path(), "theory.csv", "gap") < 0.01);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"mixture": {"setting": "C", "param": 2, "n": 200, "trials": 4}}"#).unwrap();
    let run = |name: &str, seed: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["simulate", "--config", path(&cfg), "--seed", seed, "--out", path(&out)];
        args.extend_from_slice(extra);
        assert!(specimb(&args).status.success());
        std::fs::read(out.join("trials.csv")).unwrap()
    };
    let a = run("a", "7", &[]);
    assert_eq!(a, run("b", "7", &["--sequential"]));
    assert_ne!(a, run("c", "8", &[]));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["mixture"]["seed"], 7);
}

#[test]
fn spectra_reads_binary_features() {
    let dir = tempfile::tempdir().unwrap();
    let syn = synthetic_class_features(3, 40, 12, 1.0, 1).unwrap();
    let f = dir.path().join("train.simf");
    let l = dir.path().join("train.siml");
    write_matrix(&f, &MatrixFile::new(syn.features.rows(), 12, Dtype::F32, syn.features.values().to_vec()).unwrap()).unwrap();
    write_labels(&l, syn.features.labels()).unwrap();
    let o = specimb(&["spectra", "--features", path(&f), "--labels", path(&l), "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fits = Table::read(&dir.path().join("fits.csv")).unwrap();
    assert_eq!(fits.rows.len(), 3);
}

#[test]
fn config_errors_list_every_key_on_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"mixture": {"ridge": -1, "delta": "two", "extra": 1}, "analysis": {"cutoff": 0}}"#).unwrap();
    let o = specimb(&["theory", "--config", path(&cfg), "--out", path(dir.path())]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert_eq!(e.trim_end().lines().count(), 1, "{e}");
    for key in ["mixture.ridge", "mixture.delta", "mixture.extra", "analysis.cutoff"] {
        assert!(e.contains(key), "{key} missing from {e}");
    }
}

#[test]
fn malformed_file_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.simf");
    let l = dir.path().join("l.siml");
    std::fs::write(&f, b"SIMF\x01\x03\0\0").unwrap();
    write_labels(&l, &[0, 0, 1, 1]).unwrap();
    let o = specimb(&["spectra", "--features", path(&f), "--labels", path(&l), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert_eq!(e.trim_end().lines().count(), 1);
    assert!(e.contains("byte 5") && e.contains("dtype"), "{e}");
}

#[test]
fn bad_arguments_fail_on_one_line() {
    let o = specimb(&["theory", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).trim_end().lines().count(), 1);
    let o = specimb(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("ensemble"));
}
