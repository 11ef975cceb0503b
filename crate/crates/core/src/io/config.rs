//! Strict JSON run configuration. Every unknown key, mistyped value and
//! out-of-range setting is reported together.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::bias::SortOrder;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::mixture::{MixtureSpec, TrainingConfig};
use crate::parallel::Execution;
use crate::spectral::DEFAULT_FIT_THRESHOLD;
use crate::theory::{Atom, Expectation, JointSpectrumDistribution, SettingKind, SolverParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    /// Canonical family; ignored when `atoms` is given.
    pub setting: Option<SettingKind>,
    pub param: f64,
    /// Explicit atom table instead of a canonical family.
    pub atoms: Option<Vec<Atom>>,
    pub delta: f64,
    pub prior_pos: f64,
    pub ridge: f64,
    pub loss: Loss,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            setting: Some(SettingKind::Scaling),
            param: 1.0,
            atoms: None,
            delta: 2.0,
            prior_pos: 0.5,
            ridge: 0.5,
            loss: Loss::SquaredHinge,
            n: 1000,
            trials: 50,
            seed: 0,
            grad_tol: 1e-8,
            max_iters: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub learning_rate: f64,
    pub quadrature_nodes: usize,
    pub expectation: Expectation,
    pub convergence_tol: f64,
    pub patience: usize,
    pub max_iters: usize,
    pub newton_polish: bool,
    /// Extra randomly initialised solves used to flag non-unique saddle points.
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = SolverParams::default();
        Self {
            learning_rate: p.learning_rate,
            quadrature_nodes: p.quadrature_nodes,
            expectation: p.expectation,
            convergence_tol: p.convergence_tol,
            patience: p.patience,
            max_iters: p.max_iters,
            newton_polish: p.newton_polish,
            restarts: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Family parameters; empty means the single `mixture.param`.
    pub params: Vec<f64>,
    /// Class priors; absent means the single `mixture.prior_pos`.
    pub pis: Option<Vec<f64>>,
    pub warm_start: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { params: Vec::new(), pis: None, warm_start: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Class-bias and SQS cutoff `L`.
    pub cutoff: usize,
    pub fit_threshold: f64,
    pub sqs_order: SortOrder,
    /// Tail index `k` of the effective ranks.
    pub rank_k: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            cutoff: 100,
            fit_threshold: DEFAULT_FIT_THRESHOLD,
            sqs_order: SortOrder::Descending,
            rank_k: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mixture: MixtureConfig,
    pub solver: SolverConfig,
    pub sweep: SweepConfig,
    pub analysis: AnalysisConfig,
    pub ensemble: EnsembleConfig,
    pub execution: Execution,
}

/// Parses one section, recording unknown keys and per-key type errors.
fn section<T>(name: &str, value: Option<&Value>, errors: &mut Vec<String>) -> T
where
    T: Serialize + DeserializeOwned + Default,
{
    let defaults = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("config sections serialize to objects"),
    };
    let Some(value) = value else {
        return T::default();
    };
    let Value::Object(given) = value else {
        errors.push(format!("{name}: expected an object"));
        return T::default();
    };
    // Keys that parse on their own are kept, so range checks still see them.
    let mut merged = defaults.clone();
    for (key, v) in given {
        if !defaults.contains_key(key) {
            errors.push(format!("{name}.{key}: unknown key"));
            continue;
        }
        let mut probe = defaults.clone();
        probe.insert(key.clone(), v.clone());
        if let Err(e) = serde_json::from_value::<T>(Value::Object(probe)) {
            errors.push(format!("{name}.{key}: {e}"));
            continue;
        }
        merged.insert(key.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(merged)).unwrap_or_else(|e| {
        errors.push(format!("{name}: {e}"));
        T::default()
    })
}

fn positive(errors: &mut Vec<String>, key: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errors.push(format!("{key}: must be positive, got {v}"));
    }
}

fn prior(errors: &mut Vec<String>, key: &str, v: f64) {
    if !(v > 0.0 && v < 1.0) {
        errors.push(format!("{key}: must lie in (0, 1), got {v}"));
    }
}

fn at_least(errors: &mut Vec<String>, key: &str, v: usize, min: usize) {
    if v < min {
        errors.push(format!("{key}: must be at least {min}, got {v}"));
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("invalid JSON: {e}")]))?;
        Self::from_value(&value)
    }

    pub fn from_value(value: &Value) -> Result<Self> {
        let empty = Map::new();
        let Value::Object(top) = value else {
            return Err(Error::Config(vec!["top level: expected an object".into()]));
        };
        let top = if top.is_empty() { &empty } else { top };
        let mut errors = Vec::new();
        const SECTIONS: [&str; 6] = ["mixture", "solver", "sweep", "analysis", "ensemble", "execution"];
        for key in top.keys() {
            if !SECTIONS.contains(&key.as_str()) {
                errors.push(format!("{key}: unknown key"));
            }
        }
        let execution = match top.get("execution") {
            None => Execution::default(),
            Some(v) => serde_json::from_value(v.clone()).unwrap_or_else(|e| {
                errors.push(format!("execution: {e}"));
                Execution::default()
            }),
        };
        let config = RunConfig {
            mixture: section("mixture", top.get("mixture"), &mut errors),
            solver: section("solver", top.get("solver"), &mut errors),
            sweep: section("sweep", top.get("sweep"), &mut errors),
            analysis: section("analysis", top.get("analysis"), &mut errors),
            ensemble: section("ensemble", top.get("ensemble"), &mut errors),
            execution,
        };
        config.check(&mut errors);
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Range checks, appending one message per violated key.
    fn check(&self, errors: &mut Vec<String>) {
        let m = &self.mixture;
        positive(errors, "mixture.delta", m.delta);
        prior(errors, "mixture.prior_pos", m.prior_pos);
        positive(errors, "mixture.ridge", m.ridge);
        positive(errors, "mixture.grad_tol", m.grad_tol);
        at_least(errors, "mixture.n", m.n, 2);
        at_least(errors, "mixture.trials", m.trials, 1);
        at_least(errors, "mixture.max_iters", m.max_iters, 1);
        if m.delta > 0.0 && (m.n as f64 / m.delta).round() < 1.0 {
            errors.push(format!("mixture.delta: n / delta rounds to dimension 0 (n = {})", m.n));
        }
        match (&m.atoms, m.setting) {
            (Some(atoms), _) => {
                if let Err(e) = JointSpectrumDistribution::new(atoms.clone()) {
                    errors.push(format!("mixture.atoms: {e}"));
                }
            }
            (None, Some(kind)) => {
                if let Err(e) = kind.distribution(m.param) {
                    errors.push(format!("mixture.param: {e}"));
                }
            }
            (None, None) => errors.push("mixture.setting: either setting or atoms is required".into()),
        }

        let s = &self.solver;
        positive(errors, "solver.learning_rate", s.learning_rate);
        positive(errors, "solver.convergence_tol", s.convergence_tol);
        at_least(errors, "solver.quadrature_nodes", s.quadrature_nodes, 1);
        at_least(errors, "solver.patience", s.patience, 1);
        at_least(errors, "solver.max_iters", s.max_iters, 1);

        if let Some(kind) = m.setting.filter(|_| m.atoms.is_none()) {
            for (i, &v) in self.sweep.params.iter().enumerate() {
                if let Err(e) = kind.distribution(v) {
                    errors.push(format!("sweep.params[{i}]: {e}"));
                }
            }
        }
        if let Some(pis) = &self.sweep.pis {
            if pis.is_empty() {
                errors.push("sweep.pis: must not be empty".into());
            }
            for (i, &p) in pis.iter().enumerate() {
                prior(errors, &format!("sweep.pis[{i}]"), p);
            }
        }

        at_least(errors, "analysis.cutoff", self.analysis.cutoff, 1);
        let t = self.analysis.fit_threshold;
        if !(0.0..1.0).contains(&t) {
            errors.push(format!("analysis.fit_threshold: must lie in [0, 1), got {t}"));
        }
    }

    pub fn distribution(&self) -> Result<JointSpectrumDistribution> {
        let m = &self.mixture;
        match (&m.atoms, m.setting) {
            (Some(atoms), _) => JointSpectrumDistribution::new(atoms.clone()),
            (None, Some(kind)) => kind.distribution(m.param),
            (None, None) => Err(Error::Config(vec!["mixture.setting: either setting or atoms is required".into()])),
        }
    }

    /// Dimension `p = round(n / δ)`.
    pub fn dimension(&self) -> usize {
        (self.mixture.n as f64 / self.mixture.delta).round() as usize
    }

    pub fn mixture_spec(&self) -> Result<MixtureSpec> {
        MixtureSpec::from_distribution(&self.distribution()?, self.dimension(), self.mixture.prior_pos)
    }

    pub fn training(&self) -> TrainingConfig {
        let m = &self.mixture;
        TrainingConfig {
            ridge: m.ridge,
            loss: m.loss,
            sample_count: m.n,
            grad_tol: m.grad_tol,
            max_iters: m.max_iters,
            seed: m.seed,
        }
    }

    pub fn solver_params(&self) -> SolverParams {
        let (m, s) = (&self.mixture, &self.solver);
        SolverParams {
            delta: m.delta,
            prior_pos: m.prior_pos,
            ridge: m.ridge,
            loss: m.loss,
            learning_rate: s.learning_rate,
            quadrature_nodes: s.quadrature_nodes,
            expectation: s.expectation,
            convergence_tol: s.convergence_tol,
            patience: s.patience,
            max_iters: s.max_iters,
            newton_polish: s.newton_polish,
        }
    }
}
