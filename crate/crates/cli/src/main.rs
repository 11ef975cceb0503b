use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spectral_imbalance::io::{run_command, Command, Inputs, RunConfig};
use spectral_imbalance::Execution;

/// Per-class error theory, spectrum diagnostics and spectral re-factoring.
#[derive(Parser)]
#[command(name = "specimb", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo ERM simulation of the configured mixture.
    Simulate(Common),
    /// Asymptotic per-class error of the configured mixture.
    Theory(Common),
    /// Asymptotic per-class error over `sweep.params` and `sweep.pis`.
    Sweep(Common),
    /// Per-class spectra, power-law fits and effective ranks of feature files.
    Spectra(Common),
    /// Eigen-index and offset correlations with per-class accuracy.
    Correlate(Common),
    /// Class bias and spectral quantile score per encoder.
    Scores(Common),
    /// One-sided Welch test for a pair of encoders.
    Ttest(Common),
    /// Spectral re-factoring of multi-view logits with evaluation.
    Ensemble(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `mixture.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV tables and manifest.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Run without the thread pool.
    #[arg(long)]
    sequential: bool,
    /// Feature matrix (SIMF or headerless CSV), repeated per plan.
    #[arg(long)]
    features: Vec<PathBuf>,
    /// Labels (SIML or one id per line), one shared file or one per features file.
    #[arg(long)]
    labels: Vec<PathBuf>,
    /// Multi-view logits (SIMG or headerless CSV, plan-major blocks).
    #[arg(long)]
    logits: Option<PathBuf>,
    /// Per-class accuracy table `class_id,value`, repeated per encoder.
    #[arg(long)]
    accuracies: Vec<PathBuf>,
    /// Offsets: `class_id,value` per encoder, or a plan-wide table for `ensemble`.
    #[arg(long)]
    offsets: Vec<PathBuf>,
    /// Training features from which `ensemble` derives offsets, repeated per plan.
    #[arg(long)]
    train_features: Vec<PathBuf>,
    /// Labels for the training features.
    #[arg(long)]
    train_labels: Vec<PathBuf>,
    /// Plan or encoder names, in the order of the repeated inputs.
    #[arg(long = "name")]
    names: Vec<String>,
}

fn run(cmd: Command, a: Common) -> spectral_imbalance::Result<usize> {
    let mut config = match &a.config {
        Some(p) => RunConfig::read(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.mixture.seed = seed;
    }
    if a.sequential {
        config.execution = Execution::Sequential;
    }
    let inputs = Inputs {
        features: a.features,
        labels: a.labels,
        logits: a.logits,
        accuracies: a.accuracies,
        offsets: a.offsets,
        train_features: a.train_features,
        train_labels: a.train_labels,
        names: a.names,
    };
    let manifest = run_command(cmd, &config, &inputs, &a.out)?;
    for w in &manifest.warnings {
        eprintln!("specimb: warning: {w}");
    }
    Ok(manifest.outputs.len())
}

fn one_line(s: &str) -> String {
    s.split('\n').map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("specimb: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let (cmd, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Theory(a) => (Command::Theory, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Spectra(a) => (Command::Spectra, a),
        Cmd::Correlate(a) => (Command::Correlate, a),
        Cmd::Scores(a) => (Command::Scores, a),
        Cmd::Ttest(a) => (Command::Ttest, a),
        Cmd::Ensemble(a) => (Command::Ensemble, a),
    };
    let out = args.out.clone();
    match run(cmd, args) {
        Ok(n) => {
            println!("{}: wrote {n} tables and manifest.json to {}", cmd.name(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("specimb: {}: {}", cmd.name(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
