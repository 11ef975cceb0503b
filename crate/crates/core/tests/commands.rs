use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_imbalance::io::binary::{write_labels, write_logits, write_matrix, Dtype, LogitsFile, MatrixFile};
use spectral_imbalance::io::manifest::MANIFEST_FILE;
use spectral_imbalance::io::tables::{class_values_table, Table};
use spectral_imbalance::io::{run_command, Command, Inputs, Manifest, RunConfig};
use spectral_imbalance::spectral::synthetic_class_features;
use spectral_imbalance::Error;

fn config(text: &str) -> RunConfig {
    RunConfig::from_json_str(text).unwrap()
}

fn table(dir: &Path, name: &str) -> Table {
    Table::read(&dir.join(name)).unwrap()
}

fn cell(t: &Table, row: usize, col: &str) -> f64 {
    t.rows[row][t.column(col).unwrap()].parse().unwrap()
}

/// Writes synthetic features in the binary formats and returns their paths.
fn write_features(dir: &Path, name: &str, classes: usize, dim: usize, seed: u64) -> (PathBuf, PathBuf, Vec<f64>) {
    let syn = synthetic_class_features(classes, 60, dim, 1.0, seed).unwrap();
    let f = dir.join(format!("{name}.simf"));
    let l = dir.join(format!("{name}.siml"));
    let m = MatrixFile::new(syn.features.rows(), dim, Dtype::F64, syn.features.values().to_vec()).unwrap();
    write_matrix(&f, &m).unwrap();
    write_labels(&l, syn.features.labels()).unwrap();
    (f, l, syn.accuracies)
}

#[test]
fn theory_setting_a_degrades_the_first_class() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(r#"{"mixture": {"setting": "A", "param": 2}}"#);
    let m = run_command(Command::Theory, &c, &Inputs::default(), dir.path()).unwrap();
    assert_eq!(m.outputs, vec!["theory.csv"]);
    let t = table(dir.path(), "theory.csv");
    assert!(cell(&t, 0, "poe_pos") > cell(&t, 0, "poe_neg"));
    assert!((cell(&t, 0, "poe_pos") - 0.3063).abs() < 1e-4);
}

#[test]
fn simulate_and_theory_agree_on_the_symmetric_setting() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(r#"{"mixture": {"setting": "A", "param": 1, "trials": 10, "seed": 4}}"#);
    run_command(Command::Simulate, &c, &Inputs::default(), &dir.path().join("sim")).unwrap();
    run_command(Command::Theory, &c, &Inputs::default(), &dir.path().join("th")).unwrap();
    let sim = table(&dir.path().join("sim"), "simulate.csv");
    let th = table(&dir.path().join("th"), "theory.csv");
    assert!(cell(&sim, 0, "gap") < 0.01);
    assert!(cell(&th, 0, "gap") < 0.01);
    assert_eq!(table(&dir.path().join("sim"), "trials.csv").rows.len(), 10);
}

#[test]
fn sweep_covers_the_grid_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(r#"{"mixture": {"setting": "B"}, "sweep": {"params": [0, 0.5], "pis": [0.3, 0.5, 0.7]}}"#);
    run_command(Command::Sweep, &c, &Inputs::default(), dir.path()).unwrap();
    let t = table(dir.path(), "sweep.csv");
    assert_eq!(t.rows.len(), 6);
    assert_eq!(cell(&t, 1, "param"), 0.0);
    assert_eq!(cell(&t, 1, "pi_pos"), 0.5);
    assert_eq!(cell(&t, 3, "param"), 0.5);
    assert!(t.rows.iter().all(|r| r[t.column("converged").unwrap()] == "true"));
}

#[test]
fn sweep_rejects_explicit_atoms() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(r#"{"mixture": {"atoms": [{"t": 1, "l_pos": 2, "l_neg": 1, "prob": 1}]}}"#);
    assert!(run_command(Command::Sweep, &c, &Inputs::default(), dir.path()).is_err());
    run_command(Command::Theory, &c, &Inputs::default(), dir.path()).unwrap();
    assert_eq!(table(dir.path(), "theory.csv").rows[0][0], "custom");
}

#[test]
fn spectra_tables_have_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (f, l, _) = write_features(dir.path(), "train", 4, 12, 1);
    let inputs = Inputs { features: vec![f], labels: vec![l], ..Inputs::default() };
    let out = dir.path().join("out");
    let m = run_command(Command::Spectra, &RunConfig::default(), &inputs, &out).unwrap();
    assert_eq!(m.outputs, vec!["spectra.csv", "fits.csv", "ranks.csv", "offsets.csv"]);
    assert_eq!(table(&out, "spectra.csv").header, vec!["class_id", "rank", "eigenvalue"]);
    assert_eq!(table(&out, "spectra.csv").rows.len(), 4 * 12);
    assert_eq!(table(&out, "fits.csv").header, vec!["class_id", "a", "b", "r_squared", "points_used"]);
    assert_eq!(m.inputs.len(), 2);
    assert!(m.inputs.iter().all(|d| d.sha256.len() == 64));
}

#[test]
fn spectra_accepts_csv_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let syn = synthetic_class_features(3, 30, 10, 1.0, 2).unwrap();
    let f = dir.path().join("f.csv");
    let l = dir.path().join("l.csv");
    let rows: Vec<String> = (0..syn.features.rows())
        .map(|i| syn.features.row(i).iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","))
        .collect();
    std::fs::write(&f, rows.join("\n")).unwrap();
    std::fs::write(&l, syn.features.labels().iter().map(|y| y.to_string()).collect::<Vec<_>>().join("\n")).unwrap();
    let inputs = Inputs { features: vec![f], labels: vec![l], ..Inputs::default() };
    run_command(Command::Spectra, &RunConfig::default(), &inputs, dir.path()).unwrap();
    assert_eq!(table(dir.path(), "fits.csv").rows.len(), 3);
}

#[test]
fn correlate_finds_negative_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let (f, l, acc) = write_features(dir.path(), "val", 8, 16, 3);
    let a = dir.path().join("acc.csv");
    class_values_table("accuracy", &acc).write(&a).unwrap();
    let inputs = Inputs { features: vec![f], labels: vec![l], accuracies: vec![a], ..Inputs::default() };
    run_command(Command::Correlate, &RunConfig::default(), &inputs, dir.path()).unwrap();
    let s = table(dir.path(), "correlation_summary.csv");
    assert!(cell(&s, 0, "min_pcc") <= -0.5);
    assert!(cell(&s, 0, "offset_pcc") < 0.0);
    assert_eq!(table(dir.path(), "correlation.csv").rows.len(), 16);
}

#[test]
fn scores_and_ttest_from_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = 30;
    let acc2: Vec<f64> = (0..c).map(|_| rng.random_range(0.4..0.6)).collect();
    let acc1: Vec<f64> = (0..c).map(|k| acc2[k] + if k % 2 == 0 { 0.1 } else { -0.1 } + rng.random_range(-0.01..0.01)).collect();
    let off1: Vec<f64> = (0..c).map(|k| if k % 2 == 0 { 0.5 } else { 1.5 }).collect();
    let off2 = vec![1.0; c];
    let write = |name: &str, v: &[f64]| {
        let p = dir.path().join(name);
        class_values_table("value", v).write(&p).unwrap();
        p
    };
    let inputs = Inputs {
        accuracies: vec![write("a1.csv", &acc1), write("a2.csv", &acc2)],
        offsets: vec![write("o1.csv", &off1), write("o2.csv", &off2)],
        ..Inputs::default()
    };
    let m = run_command(Command::Scores, &RunConfig::default(), &inputs, &dir.path().join("s")).unwrap();
    assert!(m.warnings.iter().any(|w| w.contains("cutoff reduced from 100 to 15")));
    let s = table(&dir.path().join("s"), "scores.csv");
    assert_eq!(s.rows[0][0], "a1");
    assert_eq!(cell(&s, 1, "sqs"), 1.0);

    run_command(Command::Ttest, &RunConfig::default(), &inputs, &dir.path().join("t")).unwrap();
    let t = table(&dir.path().join("t"), "ttest.csv");
    assert!(cell(&t, 0, "p_value") < 0.05);
    assert_eq!(t.rows[0][t.column("reject_95").unwrap()], "true");
    assert_eq!(t.rows[0][t.column("tail").unwrap()], "left");
}

fn ensemble_fixture(dir: &Path) -> (Inputs, Vec<f64>) {
    let (k, n, c) = (2, 400, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels: Vec<u32> = (0..n).map(|s| (s % c) as u32).collect();
    let mut values = Vec::new();
    for plan in 0..k {
        for &y in &labels {
            let boost = if y as usize % k == plan { 2.0 } else { 0.3 };
            values.extend((0..c).map(|cls| rng.random_range(-1.0..1.0) + if cls == y as usize { boost } else { 0.0 }));
        }
    }
    let g = dir.join("test.simg");
    write_logits(&g, &LogitsFile::new(k, n, c, Dtype::F32, values.clone()).unwrap()).unwrap();
    let l = dir.join("test.siml");
    write_labels(&l, &labels).unwrap();
    let o = dir.join("offsets.csv");
    std::fs::write(&o, "class_id,Zoom Blur,Snow\n0,0,1\n1,1,0\n2,0,1\n3,1,0\n").unwrap();
    let inputs = Inputs { logits: Some(g), labels: vec![l], offsets: vec![o], ..Inputs::default() };
    (inputs, values)
}

#[test]
fn ensemble_from_offset_table() {
    let dir = tempfile::tempdir().unwrap();
    let (inputs, _) = ensemble_fixture(dir.path());
    let out = dir.path().join("out");
    let m = run_command(Command::Ensemble, &RunConfig::default(), &inputs, &out).unwrap();
    assert_eq!(m.outputs, vec!["ensemble.csv", "ensemble_classes.csv", "ensemble.txt"]);
    let t = table(&out, "ensemble.csv");
    assert_eq!(t.rows[2][0], "ensemble");
    assert!(cell(&t, 2, "accuracy") >= cell(&t, 0, "accuracy").max(cell(&t, 1, "accuracy")));
    let per_class = table(&out, "ensemble_classes.csv");
    assert_eq!(per_class.header, vec!["class_id", "assigned_plan", "Zoom Blur", "Snow", "ensemble"]);
    assert_eq!(per_class.rows[1][1], "Snow");
    assert!(std::fs::read_to_string(out.join("ensemble.txt")).unwrap().contains("raw logits"));
}

#[test]
fn ensemble_from_training_features() {
    let dir = tempfile::tempdir().unwrap();
    let (mut inputs, _) = ensemble_fixture(dir.path());
    let (f1, l1, _) = write_features(dir.path(), "p1", 4, 12, 7);
    let (f2, l2, _) = write_features(dir.path(), "p2", 4, 12, 8);
    inputs.offsets.clear();
    inputs.train_features = vec![f1, f2];
    inputs.train_labels = vec![l1, l2];
    let m = run_command(Command::Ensemble, &RunConfig::default(), &inputs, dir.path()).unwrap();
    assert!(m.inputs.iter().any(|d| d.role == "train_features"));
    assert_eq!(table(dir.path(), "ensemble.csv").rows[0][0], "p1");

    inputs.offsets = vec![dir.path().join("offsets.csv")];
    assert!(run_command(Command::Ensemble, &RunConfig::default(), &inputs, dir.path()).is_err());
}

#[test]
fn ensemble_accepts_csv_logits() {
    let dir = tempfile::tempdir().unwrap();
    let (mut inputs, values) = ensemble_fixture(dir.path());
    let csv = dir.path().join("logits.csv");
    let lines: Vec<String> = values
        .chunks(4)
        .map(|r| r.iter().map(|v| format!("{}", *v as f32 as f64)).collect::<Vec<_>>().join(","))
        .collect();
    std::fs::write(&csv, lines.join("\n")).unwrap();
    run_command(Command::Ensemble, &RunConfig::default(), &inputs, &dir.path().join("bin")).unwrap();
    inputs.logits = Some(csv);
    run_command(Command::Ensemble, &RunConfig::default(), &inputs, &dir.path().join("csv")).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("bin/ensemble.csv")).unwrap(),
        std::fs::read(dir.path().join("csv/ensemble.csv")).unwrap()
    );
}

#[test]
fn manifest_digests_track_input_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (inputs, _) = ensemble_fixture(dir.path());
    let digests = |out: &str| {
        run_command(Command::Ensemble, &RunConfig::default(), &inputs, &dir.path().join(out)).unwrap();
        let m = Manifest::read(&dir.path().join(out).join(MANIFEST_FILE)).unwrap();
        m.inputs.into_iter().map(|d| (d.role, d.sha256)).collect::<Vec<_>>()
    };
    let a = digests("a");
    assert_eq!(a, digests("b"));
    let offsets = &inputs.offsets[0];
    std::fs::write(offsets, "class_id,Zoom Blur,Snow\n0,0,1\n1,1,0\n2,0,1\n3,1,0.5\n").unwrap();
    let c = digests("c");
    assert_eq!(a.len(), c.len());
    for (x, y) in a.iter().zip(&c) {
        assert_eq!(x.1 == y.1, x.0 != "offsets", "{}", x.0);
    }
}

#[test]
fn malformed_binary_names_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (f, l, _) = write_features(dir.path(), "x", 3, 12, 1);
    let mut bytes = std::fs::read(&f).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&f, bytes).unwrap();
    let inputs = Inputs { features: vec![f], labels: vec![l], ..Inputs::default() };
    let e = run_command(Command::Spectra, &RunConfig::default(), &inputs, dir.path()).unwrap_err();
    assert!(matches!(e, Error::Format { offset: 24, .. }), "{e}");
}

#[test]
fn missing_flags_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [Command::Spectra, Command::Correlate, Command::Scores, Command::Ttest, Command::Ensemble] {
        let e = run_command(cmd, &RunConfig::default(), &Inputs::default(), dir.path()).unwrap_err();
        assert!(e.to_string().contains("--"), "{}: {e}", cmd.name());
    }
}
