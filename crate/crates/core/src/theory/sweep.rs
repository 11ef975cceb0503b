use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::parallel::{map_indexed, Execution};
use crate::theory::{predict, solve, SaddlePoint, SettingKind, SolverParams};

/// One grid point. Prediction fields are NaN when the solve did not converge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: SettingKind,
    pub param: f64,
    pub pi_pos: f64,
    pub poe_pos: f64,
    pub poe_neg: f64,
    pub gap: f64,
    pub converged: bool,
    pub iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    /// Start each point from the previous converged solution. Forces
    /// sequential execution.
    pub warm_start: bool,
    pub execution: Execution,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            warm_start: true,
            execution: Execution::Parallel,
        }
    }
}

fn solve_point(
    kind: SettingKind,
    param: f64,
    pi_pos: f64,
    params: &SolverParams,
    init: Option<&SaddlePoint>,
) -> Result<(SweepRow, Option<SaddlePoint>)> {
    let dist = kind.distribution(param)?;
    let p = SolverParams { prior_pos: pi_pos, ..*params };
    let mut sol = solve(&dist, &p, init)?;
    if !sol.converged && init.is_some() {
        sol = solve(&dist, &p, None)?;
    }
    let mut row = SweepRow {
        setting: kind,
        param,
        pi_pos,
        poe_pos: f64::NAN,
        poe_neg: f64::NAN,
        gap: f64::NAN,
        converged: sol.converged,
        iters: sol.iterations,
    };
    if let Ok(pred) = predict(&sol, &dist) {
        row.poe_pos = pred.poe_pos;
        row.poe_neg = pred.poe_neg;
        row.gap = pred.class_gap;
    }
    Ok((row, sol.converged.then_some(sol)))
}

/// Solves every `(param, π₁)` pair in row-major order. Without a `pi_grid`
/// the prior from `params` is used. Non-convergence is recorded in the row;
/// invalid parameters abort the sweep.
pub fn sweep(
    kind: SettingKind,
    param_grid: &[f64],
    pi_grid: Option<&[f64]>,
    params: &SolverParams,
    options: SweepOptions,
) -> Result<Vec<SweepRow>> {
    params.validate()?;
    let default_pi = [params.prior_pos];
    let pis = pi_grid.unwrap_or(&default_pi);
    if param_grid.is_empty() || pis.is_empty() {
        return invalid("sweep grids must be non-empty");
    }
    for &pi in pis {
        if !(pi > 0.0 && pi < 1.0) {
            return invalid(format!("pi grid value {pi} is outside (0, 1)"));
        }
    }
    for &v in param_grid {
        kind.distribution(v)?;
    }
    let points: Vec<(f64, f64)> = param_grid
        .iter()
        .flat_map(|&v| pis.iter().map(move |&pi| (v, pi)))
        .collect();

    if options.warm_start {
        let mut rows = Vec::with_capacity(points.len());
        let mut prev: Option<SaddlePoint> = None;
        for &(v, pi) in &points {
            let (row, sol) = solve_point(kind, v, pi, params, prev.as_ref())?;
            if sol.is_some() {
                prev = sol;
            }
            rows.push(row);
        }
        Ok(rows)
    } else {
        map_indexed(options.execution, points.len(), |i| {
            let (v, pi) = points[i];
            solve_point(kind, v, pi, params, None).map(|(row, _)| row)
        })
        .into_iter()
        .collect()
    }
}
