//! Experiment commands. Each reads its inputs, delegates to one module and
//! writes CSV tables plus a manifest into the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::bias::{class_bias, encoder_pair_test, pearson, sqs, AccuracyTable};
use crate::ensemble::{build_offset_matrix, evaluate, EnsembleOptions, MultiViewLogits, OffsetMatrix, PlanFits};
use crate::error::{invalid, Error, Result};
use crate::io::binary::{labels_from_bytes, LogitsFile, MatrixFile, LABEL_MAGIC, LOGITS_MAGIC, MATRIX_MAGIC};
use crate::io::config::RunConfig;
use crate::io::manifest::{InputDigest, Manifest};
use crate::io::tables::{fmt, offset_table, read_class_values, read_numeric_rows, read_offset_table, Table};
use crate::mixture::run_simulation_with;
use crate::spectral::{
    class_spectra, effective_ranks, eigen_index_correlation, fit_power_law_with, ClassSpectrum, FeatureMatrix,
    PowerLawFit,
};
use crate::theory::{predict, solve, solve_with_restarts, sweep, SweepOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Theory,
    Sweep,
    Spectra,
    Correlate,
    Scores,
    Ttest,
    Ensemble,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Simulate,
        Command::Theory,
        Command::Sweep,
        Command::Spectra,
        Command::Correlate,
        Command::Scores,
        Command::Ttest,
        Command::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Theory => "theory",
            Command::Sweep => "sweep",
            Command::Spectra => "spectra",
            Command::Correlate => "correlate",
            Command::Scores => "scores",
            Command::Ttest => "ttest",
            Command::Ensemble => "ensemble",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Data files given on the command line. Repeated flags pair up by position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Inputs {
    pub features: Vec<PathBuf>,
    pub labels: Vec<PathBuf>,
    pub logits: Option<PathBuf>,
    pub accuracies: Vec<PathBuf>,
    pub offsets: Vec<PathBuf>,
    /// Training features and labels used to derive offsets for `ensemble`.
    pub train_features: Vec<PathBuf>,
    pub train_labels: Vec<PathBuf>,
    /// Names for the repeated feature or accuracy inputs; file stems otherwise.
    pub names: Vec<String>,
}

struct Run<'a> {
    config: &'a RunConfig,
    out: &'a Path,
    manifest: Manifest,
}

impl Run<'_> {
    fn emit(&mut self, name: &str, table: &Table) -> Result<()> {
        table.write(&self.out.join(name))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn emit_text(&mut self, name: &str, text: &str) -> Result<()> {
        crate::io::write_atomic(&self.out.join(name), text.as_bytes())?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    /// Reads a file once, recording its digest.
    fn read(&mut self, role: &str, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.manifest.inputs.push(InputDigest::of_bytes(role, path, &bytes));
        Ok(bytes)
    }

    fn digest(&mut self, role: &str, path: &Path) -> Result<()> {
        self.manifest.inputs.push(InputDigest::of_file(role, path)?);
        Ok(())
    }

    fn warn(&mut self, message: String) {
        self.manifest.warnings.push(message);
    }

    /// Class-bias cutoff reduced to `C / 2` when the configured value is too large.
    fn cutoff(&mut self, classes: usize) -> usize {
        let wanted = self.config.analysis.cutoff;
        let cutoff = wanted.min(classes / 2).max(1);
        if cutoff != wanted {
            self.warn(format!("cutoff reduced from {wanted} to {cutoff} for {classes} classes"));
        }
        cutoff
    }

    fn features(&mut self, features: &Path, labels: &Path, role: &str) -> Result<FeatureMatrix> {
        let fb = self.read(&format!("{role}features"), features)?;
        let lb = self.read(&format!("{role}labels"), labels)?;
        let (cols, values) = if fb.starts_with(MATRIX_MAGIC) {
            let m = MatrixFile::from_bytes(&fb, features)?;
            (m.cols, m.values)
        } else {
            let rows = read_numeric_rows(features)?;
            let cols = rows.first().map_or(0, Vec::len);
            if let Some(i) = rows.iter().position(|r| r.len() != cols) {
                return invalid(format!("{}: row {} has {} values, expected {cols}", features.display(), i + 1, rows[i].len()));
            }
            (cols, rows.concat())
        };
        let labels = read_label_bytes(&lb, labels)?;
        FeatureMatrix::new(cols, values, labels)
    }

    fn finish(self) -> Result<Manifest> {
        self.manifest.write(self.out)?;
        Ok(self.manifest)
    }
}

fn read_label_bytes(bytes: &[u8], path: &Path) -> Result<Vec<u32>> {
    if bytes.starts_with(LABEL_MAGIC) {
        return labels_from_bytes(bytes, path);
    }
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        offset: e.valid_up_to() as u64,
        message: "expected SIML magic or UTF-8 text with one class id per line".into(),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Invalid(format!("{}: line {}: expected a class id, found {l:?}", path.display(), i + 1)))
        })
        .collect()
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn names_for(paths: &[PathBuf], names: &[String]) -> Result<Vec<String>> {
    if !names.is_empty() && names.len() != paths.len() {
        return invalid(format!("{} names given for {} inputs", names.len(), paths.len()));
    }
    Ok(if names.is_empty() { paths.iter().map(|p| stem(p)).collect() } else { names.to_vec() })
}

/// One label file per feature file, or a single file shared by all.
fn pair_labels<'a>(features: &[PathBuf], labels: &'a [PathBuf], flag: &str) -> Result<Vec<&'a Path>> {
    match labels.len() {
        1 => Ok(vec![labels[0].as_path(); features.len()]),
        n if n == features.len() => Ok(labels.iter().map(PathBuf::as_path).collect()),
        n => invalid(format!("--{flag} given {n} times for {} feature files", features.len())),
    }
}

fn require(paths: &[PathBuf], flag: &str, count: Option<usize>) -> Result<()> {
    match count {
        Some(c) if paths.len() != c => invalid(format!("--{flag} must be given exactly {c} times, got {}", paths.len())),
        None if paths.is_empty() => invalid(format!("--{flag} is required")),
        _ => Ok(()),
    }
}

fn bool_str(b: bool) -> String {
    b.to_string()
}

/// Runs `command` and writes its outputs and manifest into `out`.
pub fn run_command(command: Command, config: &RunConfig, inputs: &Inputs, out: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut run = Run {
        config,
        out,
        manifest: Manifest::new(command.name(), config),
    };
    match command {
        Command::Simulate => simulate(&mut run)?,
        Command::Theory => theory(&mut run)?,
        Command::Sweep => run_sweep(&mut run)?,
        Command::Spectra => spectra(&mut run, inputs)?,
        Command::Correlate => correlate(&mut run, inputs)?,
        Command::Scores => scores(&mut run, inputs)?,
        Command::Ttest => ttest(&mut run, inputs)?,
        Command::Ensemble => ensemble(&mut run, inputs)?,
    }
    run.finish()
}

fn setting_label(config: &RunConfig) -> String {
    match (&config.mixture.atoms, config.mixture.setting) {
        (None, Some(kind)) => kind.letter().to_string(),
        _ => "custom".to_string(),
    }
}

fn simulate(run: &mut Run) -> Result<()> {
    let c = run.config;
    let spec = c.mixture_spec()?;
    let s = run_simulation_with(&spec, &c.training(), c.mixture.trials, c.mixture.seed, c.execution)?;
    let mut summary = Table::new([
        "setting", "param", "pi_pos", "n", "p", "trials", "mean_poe_pos", "mean_poe_neg", "std_poe_pos", "std_poe_neg",
        "mean_signed_gap", "gap",
    ]);
    summary.push(vec![
        setting_label(c),
        fmt(c.mixture.param),
        fmt(c.mixture.prior_pos),
        c.mixture.n.to_string(),
        c.dimension().to_string(),
        s.trials.to_string(),
        fmt(s.mean_poe_pos),
        fmt(s.mean_poe_neg),
        fmt(s.std_poe_pos),
        fmt(s.std_poe_neg),
        fmt(s.mean_signed_gap),
        fmt(s.mean_gap()),
    ]);
    let mut trials = Table::new(["trial", "poe_pos", "poe_neg", "class_gap"]);
    for (t, r) in s.per_trial.iter().enumerate() {
        trials.push(vec![t.to_string(), fmt(r.poe_pos), fmt(r.poe_neg), fmt(r.class_gap)]);
    }
    run.emit("simulate.csv", &summary)?;
    run.emit("trials.csv", &trials)
}

fn theory(run: &mut Run) -> Result<()> {
    let c = run.config;
    let dist = c.distribution()?;
    let params = c.solver_params();
    let sp = solve(&dist, &params, None)?;
    let pred = predict(&sp, &dist)?;
    let mut t = Table::new([
        "setting", "param", "pi_pos", "poe_pos", "poe_neg", "gap", "objective", "iterations", "update_norm",
        "restart_disagreement",
    ]);
    let mut disagreement = f64::NAN;
    if c.solver.restarts > 0 {
        let report = solve_with_restarts(&dist, &params, c.solver.restarts, c.mixture.seed)?;
        disagreement = report.max_disagreement;
        if report.suspicious() {
            run.warn(format!(
                "random restarts disagree by {:.3e}; the saddle point may not be unique",
                report.max_disagreement
            ));
        }
    }
    t.push(vec![
        setting_label(c),
        fmt(c.mixture.param),
        fmt(c.mixture.prior_pos),
        fmt(pred.poe_pos),
        fmt(pred.poe_neg),
        fmt(pred.class_gap),
        fmt(sp.objective_value),
        sp.iterations.to_string(),
        fmt(sp.update_norm),
        fmt(disagreement),
    ]);
    run.emit("theory.csv", &t)
}

fn run_sweep(run: &mut Run) -> Result<()> {
    let c = run.config;
    let (Some(kind), None) = (c.mixture.setting, &c.mixture.atoms) else {
        return invalid("sweep needs mixture.setting rather than explicit atoms");
    };
    let grid = if c.sweep.params.is_empty() { vec![c.mixture.param] } else { c.sweep.params.clone() };
    let options = SweepOptions {
        warm_start: c.sweep.warm_start,
        execution: c.execution,
    };
    let rows = sweep(kind, &grid, c.sweep.pis.as_deref(), &c.solver_params(), options)?;
    let mut t = Table::new(["setting", "param", "pi_pos", "poe_pos", "poe_neg", "gap", "converged", "iterations"]);
    for r in &rows {
        if !r.converged {
            run.warn(format!("no convergence at param {} and pi_pos {}", r.param, r.pi_pos));
        }
        t.push(vec![
            r.setting.letter().to_string(),
            fmt(r.param),
            fmt(r.pi_pos),
            fmt(r.poe_pos),
            fmt(r.poe_neg),
            fmt(r.gap),
            bool_str(r.converged),
            r.iters.to_string(),
        ]);
    }
    run.emit("sweep.csv", &t)
}

struct PlanSpectra {
    name: String,
    spectra: Vec<ClassSpectrum>,
    fits: Vec<PowerLawFit>,
}

fn plan_spectra(run: &mut Run, name: String, features: &Path, labels: &Path, role: &str) -> Result<PlanSpectra> {
    let fm = run.features(features, labels, role)?;
    let spectra = class_spectra(&fm, run.config.execution)?;
    let fits = spectra
        .iter()
        .map(|s| {
            fit_power_law_with(&s.eigenvalues, run.config.analysis.fit_threshold)
                .map_err(|e| match e {
                    Error::Invalid(m) => Error::Invalid(format!("{name}: class {}: {m}", s.class_id)),
                    other => other,
                })
        })
        .collect::<Result<_>>()?;
    Ok(PlanSpectra { name, spectra, fits })
}

fn spectra(run: &mut Run, inputs: &Inputs) -> Result<()> {
    require(&inputs.features, "features", None)?;
    let labels = pair_labels(&inputs.features, &inputs.labels, "labels")?;
    let names = names_for(&inputs.features, &inputs.names)?;
    let single = inputs.features.len() == 1;
    let mut plans = Vec::new();
    for ((f, l), name) in inputs.features.iter().zip(labels).zip(names) {
        plans.push(plan_spectra(run, name, f, l, "")?);
    }
    for plan in &plans {
        let suffix = if single { String::new() } else { format!(".{}", plan.name) };
        let mut sp = Table::new(["class_id", "rank", "eigenvalue"]);
        let mut fits = Table::new(["class_id", "a", "b", "r_squared", "points_used"]);
        let mut ranks = Table::new(["class_id", "k", "rho_k", "r_k"]);
        for (s, fit) in plan.spectra.iter().zip(&plan.fits) {
            for (j, v) in s.eigenvalues.iter().enumerate() {
                sp.push(vec![s.class_id.to_string(), (j + 1).to_string(), fmt(*v)]);
            }
            fits.push(vec![
                s.class_id.to_string(),
                fmt(fit.offset),
                fmt(fit.decay),
                fmt(fit.r_squared),
                fit.points_used.to_string(),
            ]);
            let r = effective_ranks(s, run.config.analysis.rank_k)?;
            ranks.push(vec![s.class_id.to_string(), r.k.to_string(), fmt(r.rho_k), fmt(r.r_k)]);
        }
        run.emit(&format!("spectra{suffix}.csv"), &sp)?;
        run.emit(&format!("fits{suffix}.csv"), &fits)?;
        run.emit(&format!("ranks{suffix}.csv"), &ranks)?;
    }
    let plan_names: Vec<String> = plans.iter().map(|p| p.name.clone()).collect();
    let rows: Vec<Vec<f64>> = plans.iter().map(|p| p.fits.iter().map(|f| f.offset).collect()).collect();
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return invalid("feature files disagree on the number of classes");
    }
    run.emit("offsets.csv", &offset_table(&plan_names, &rows))
}

fn correlate(run: &mut Run, inputs: &Inputs) -> Result<()> {
    require(&inputs.features, "features", Some(1))?;
    require(&inputs.labels, "labels", Some(1))?;
    require(&inputs.accuracies, "accuracies", Some(1))?;
    let plan = plan_spectra(run, stem(&inputs.features[0]), &inputs.features[0], &inputs.labels[0], "")?;
    run.digest("accuracies", &inputs.accuracies[0])?;
    let acc = read_class_values(&inputs.accuracies[0])?;
    if acc.len() != plan.spectra.len() {
        return Err(Error::Shape(format!("{} accuracies for {} classes", acc.len(), plan.spectra.len())));
    }
    let corr = eigen_index_correlation(&plan.spectra, &acc)?;
    let offsets: Vec<f64> = plan.fits.iter().map(|f| f.offset).collect();
    let off = pearson(&offsets, &acc)?;
    let mut per_rank = Table::new(["rank", "pcc"]);
    for (j, r) in corr.coefficients.iter().enumerate() {
        per_rank.push(vec![(j + 1).to_string(), fmt(*r)]);
    }
    let mut summary = Table::new(["classes", "min_rank", "min_pcc", "offset_pcc", "offset_p_value"]);
    summary.push(vec![
        acc.len().to_string(),
        (corr.argmin + 1).to_string(),
        fmt(corr.min),
        fmt(off.r),
        fmt(off.p_value),
    ]);
    run.emit("correlation.csv", &per_rank)?;
    run.emit("correlation_summary.csv", &summary)
}

fn scores(run: &mut Run, inputs: &Inputs) -> Result<()> {
    require(&inputs.accuracies, "accuracies", None)?;
    require(&inputs.offsets, "offsets", Some(inputs.accuracies.len()))?;
    let names = names_for(&inputs.accuracies, &inputs.names)?;
    let mut t = Table::new(["encoder", "classes", "cutoff", "class_bias", "sqs", "sqs_order"]);
    for ((a, o), name) in inputs.accuracies.iter().zip(&inputs.offsets).zip(names) {
        run.digest("accuracies", a)?;
        run.digest("offsets", o)?;
        let acc = AccuracyTable::new(read_class_values(a)?, Some(name.clone()))?;
        let s = read_class_values(o)?;
        if s.len() != acc.len() {
            return Err(Error::Shape(format!("{name}: {} accuracies but {} scores", acc.len(), s.len())));
        }
        let cutoff = run.cutoff(acc.len());
        let order = run.config.analysis.sqs_order;
        t.push(vec![
            name,
            acc.len().to_string(),
            cutoff.to_string(),
            fmt(class_bias(&acc, cutoff)?),
            fmt(sqs(&s, cutoff, order)?),
            serde_json::to_value(order)?.as_str().unwrap_or_default().to_string(),
        ]);
    }
    run.emit("scores.csv", &t)
}

fn ttest(run: &mut Run, inputs: &Inputs) -> Result<()> {
    require(&inputs.accuracies, "accuracies", Some(2))?;
    require(&inputs.offsets, "offsets", Some(2))?;
    let mut read = |role: &str, p: &PathBuf| -> Result<Vec<f64>> {
        run.digest(role, p)?;
        read_class_values(p)
    };
    let acc1 = AccuracyTable::new(read("accuracies", &inputs.accuracies[0])?, None)?;
    let acc2 = AccuracyTable::new(read("accuracies", &inputs.accuracies[1])?, None)?;
    let off1 = read("offsets", &inputs.offsets[0])?;
    let off2 = read("offsets", &inputs.offsets[1])?;
    let w = encoder_pair_test(&acc1, &acc2, &off1, &off2)?;
    let mut t = Table::new(["t_statistic", "degrees_of_freedom", "p_value", "tail", "reject_95", "reject_99"]);
    t.push(vec![
        fmt(w.t_statistic),
        fmt(w.degrees_of_freedom),
        fmt(w.p_value),
        "left".to_string(),
        bool_str(w.rejects(0.95).unwrap_or(false)),
        bool_str(w.rejects(0.99).unwrap_or(false)),
    ]);
    run.emit("ttest.csv", &t)
}

fn load_logits(run: &mut Run, path: &Path, labels: Option<&Path>, plans: usize) -> Result<MultiViewLogits> {
    let bytes = run.read("logits", path)?;
    let (k, n, c, values) = if bytes.starts_with(LOGITS_MAGIC) {
        let l = LogitsFile::from_bytes(&bytes, path)?;
        (l.plans, l.samples, l.classes, l.values)
    } else {
        // Headerless rows of C logits, plan-major: K blocks of N rows.
        let rows = read_numeric_rows(path)?;
        let c = rows.first().map_or(0, Vec::len);
        if plans == 0 || rows.len() % plans != 0 || rows.iter().any(|r| r.len() != c) {
            return invalid(format!(
                "{}: expected {plans} equal blocks of rows with a constant number of columns",
                path.display()
            ));
        }
        (plans, rows.len() / plans, c, rows.concat())
    };
    let labels = match labels {
        Some(p) => {
            let b = run.read("labels", p)?;
            Some(read_label_bytes(&b, p)?)
        }
        None => None,
    };
    MultiViewLogits::new(k, n, c, values, labels)
}

fn ensemble(run: &mut Run, inputs: &Inputs) -> Result<()> {
    let Some(logits_path) = &inputs.logits else {
        return invalid("--logits is required");
    };
    require(&inputs.labels, "labels", Some(1))?;
    let m = match (inputs.offsets.len(), inputs.train_features.is_empty()) {
        (1, true) => {
            run.digest("offsets", &inputs.offsets[0])?;
            let (names, rows) = read_offset_table(&inputs.offsets[0])?;
            let classes = rows.first().map_or(0, Vec::len);
            OffsetMatrix::new(names, classes, rows.concat())?
        }
        (0, false) => {
            let labels = pair_labels(&inputs.train_features, &inputs.train_labels, "train-labels")?;
            let names = names_for(&inputs.train_features, &inputs.names)?;
            let mut plans = Vec::new();
            for ((f, l), name) in inputs.train_features.iter().zip(labels).zip(names) {
                let p = plan_spectra(run, name, f, l, "train_")?;
                let fits: BTreeMap<u32, PowerLawFit> = p.spectra.iter().map(|s| s.class_id).zip(p.fits).collect();
                plans.push(PlanFits { name: p.name, fits });
            }
            build_offset_matrix(&plans)?
        }
        _ => return invalid("give either one --offsets table or --train-features, not both"),
    };
    let logits = load_logits(run, logits_path, Some(&inputs.labels[0]), m.plans())?;
    let options = EnsembleOptions {
        standardize: run.config.ensemble.standardize,
        execution: run.config.execution,
    };
    let cutoff = run.cutoff(m.classes());
    let r = evaluate(&logits, &m, options, cutoff)?;

    let mut summary = Table::new(["model", "accuracy", "class_bias"]);
    for (k, name) in r.plan_names.iter().enumerate() {
        summary.push(vec![name.clone(), fmt(r.plan_accuracies[k]), fmt(r.plan_class_bias[k])]);
    }
    summary.push(vec!["ensemble".into(), fmt(r.ensemble_accuracy), fmt(r.ensemble_class_bias)]);

    let mut header = vec!["class_id".to_string(), "assigned_plan".to_string()];
    header.extend(r.plan_names.iter().cloned());
    header.push("ensemble".into());
    let mut per_class = Table::new(header);
    for c in 0..m.classes() {
        let mut row = vec![c.to_string(), r.plan_names[r.assignment[c]].clone()];
        row.extend(r.plan_class_accuracies.iter().map(|a| fmt(a[c])));
        row.push(fmt(r.ensemble_class_accuracies[c]));
        per_class.push(row);
    }

    let mut text = String::new();
    for (k, name) in r.plan_names.iter().enumerate() {
        text.push_str(&format!(
            "{name}: accuracy {:.4}, class bias {:.4}\n",
            r.plan_accuracies[k], r.plan_class_bias[k]
        ));
    }
    text.push_str(&format!(
        "ensemble: accuracy {:.4}, class bias {:.4} (cutoff {}, {} logits)\n",
        r.ensemble_accuracy,
        r.ensemble_class_bias,
        r.cutoff,
        if options.standardize { "standardized" } else { "raw" }
    ));
    run.emit("ensemble.csv", &summary)?;
    run.emit("ensemble_classes.csv", &per_class)?;
    run.emit_text("ensemble.txt", &text)
}
