//! Exact asymptotic per-class error for the two-class spectral mixture.

pub mod distribution;
pub mod moreau;
pub mod objective;
pub mod solver;
pub mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::loss::Loss;

pub use distribution::{setting_a, setting_b, setting_c, Atom, JointSpectrumDistribution, SettingKind};
pub use moreau::{moreau1, moreau2_square};
pub use objective::{objective, ClassVars, Expectation, Objective, SaddlePoint};
pub use solver::{predict, solve, solve_with_restarts, RestartReport, TheoryPrediction};
pub use sweep::{sweep, SweepOptions, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Samples per dimension, `n / p`.
    pub delta: f64,
    pub prior_pos: f64,
    pub ridge: f64,
    pub loss: Loss,
    pub learning_rate: f64,
    pub quadrature_nodes: usize,
    pub expectation: Expectation,
    /// Threshold on the norm of one projected update.
    pub convergence_tol: f64,
    /// Consecutive sub-threshold updates needed to stop.
    pub patience: usize,
    pub max_iters: usize,
    /// Finish with Newton steps on the stationarity system.
    pub newton_polish: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            delta: 2.0,
            prior_pos: 0.5,
            ridge: 0.5,
            loss: Loss::SquaredHinge,
            learning_rate: 0.01,
            quadrature_nodes: 64,
            expectation: Expectation::Exact,
            convergence_tol: 1e-8,
            patience: 100,
            max_iters: 500_000,
            newton_polish: true,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta", self.delta),
            ("ridge", self.ridge),
            ("learning_rate", self.learning_rate),
            ("convergence_tol", self.convergence_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.prior_pos > 0.0 && self.prior_pos < 1.0) {
            return invalid(format!("prior_pos must lie in (0, 1), got {}", self.prior_pos));
        }
        if self.quadrature_nodes == 0 || self.max_iters == 0 || self.patience == 0 {
            return invalid("quadrature_nodes, max_iters and patience must be positive");
        }
        Ok(())
    }
}
