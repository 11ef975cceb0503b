use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mixture::{sample_dataset, train_erm, ClassErrorReport, MixtureSpec, TrainingConfig};
use crate::parallel::{map_indexed, Execution};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub trials: usize,
    pub mean_poe_pos: f64,
    pub mean_poe_neg: f64,
    pub std_poe_pos: f64,
    pub std_poe_neg: f64,
    /// Mean of `poe_pos - poe_neg` over trials.
    pub mean_signed_gap: f64,
    pub per_trial: Vec<ClassErrorReport>,
}

impl SimulationSummary {
    pub fn mean_gap(&self) -> f64 {
        self.mean_signed_gap.abs()
    }
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn run_simulation(spec: &MixtureSpec, config: &TrainingConfig, trials: usize, master_seed: u64) -> Result<SimulationSummary> {
    run_simulation_with(spec, config, trials, master_seed, Execution::default())
}

/// Trial `t` samples `config.sample_count` points from the stream
/// `derive_seed(master_seed, t)`, trains ERM and records both closed-form POEs.
pub fn run_simulation_with(
    spec: &MixtureSpec,
    config: &TrainingConfig,
    trials: usize,
    master_seed: u64,
    exec: Execution,
) -> Result<SimulationSummary> {
    config.validate()?;
    if trials == 0 {
        return invalid("trials must be at least 1");
    }
    let results = map_indexed(exec, trials, |t| {
        let run = || -> Result<ClassErrorReport> {
            let data = sample_dataset(spec, config.sample_count, derive_seed(master_seed, t as u64))?;
            let est = train_erm(&data, config)?;
            ClassErrorReport::closed_form(&est, spec)
        };
        run().map_err(|e| Error::Trial {
            trial: t,
            source: Box::new(e),
        })
    });
    let per_trial = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (mean_poe_pos, std_poe_pos) = mean_std(per_trial.iter().map(|r| r.poe_pos));
    let (mean_poe_neg, std_poe_neg) = mean_std(per_trial.iter().map(|r| r.poe_neg));
    Ok(SimulationSummary {
        trials,
        mean_poe_pos,
        mean_poe_neg,
        std_poe_pos,
        std_poe_neg,
        mean_signed_gap: mean_poe_pos - mean_poe_neg,
        per_trial,
    })
}
