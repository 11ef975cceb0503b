//! Projected simultaneous gradient descent/ascent for the saddle point,
//! with step halving on divergence and a Newton finish on the stationarity
//! system.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::class::Class;
use crate::error::{Error, Result};
use crate::special::q_function;
use crate::theory::distribution::JointSpectrumDistribution;
use crate::theory::objective::{
    is_floored, is_max_var, Objective, SaddlePoint, FLOOR, NUM_VARS,
};
use crate::theory::SolverParams;

type Vars = [f64; NUM_VARS];

/// Largest |variable| before a run is declared divergent.
const BLOWUP: f64 = 1e6;
const MAX_HALVINGS: usize = 12;
/// Gradient norm at which GDA hands over to Newton.
const NEWTON_HANDOFF: f64 = 1e-3;
const NEWTON_TOL: f64 = 1e-12;

fn project(z: &mut Vars) {
    for (i, x) in z.iter_mut().enumerate() {
        if is_floored(i) && *x < FLOOR {
            *x = FLOOR;
        }
    }
}

fn gda_step(z: &Vars, g: &Vars, lr: f64) -> Vars {
    let mut next = *z;
    for i in 0..NUM_VARS {
        next[i] += if is_max_var(i) { lr * g[i] } else { -lr * g[i] };
    }
    project(&mut next);
    next
}

fn distance(a: &Vars, b: &Vars) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

enum Phase {
    /// Update norm stayed below tolerance for `patience` iterations.
    Converged,
    /// Gradient small enough to try Newton.
    Handoff,
    Exhausted,
    Diverged,
}

struct Gda {
    z: Vars,
    iterations: usize,
    update_norm: f64,
}

impl Gda {
    fn run(&mut self, obj: &Objective<'_>, params: &SolverParams, lr: f64, budget: usize, handoff: bool) -> Phase {
        let mut calm = 0;
        for _ in 0..budget {
            let (_, g) = obj.value_and_gradient(&self.z);
            let next = gda_step(&self.z, &g, lr);
            if next.iter().any(|x| !x.is_finite() || x.abs() > BLOWUP) {
                return Phase::Diverged;
            }
            self.update_norm = distance(&next, &self.z);
            self.z = next;
            self.iterations += 1;
            if self.update_norm < params.convergence_tol {
                calm += 1;
                if calm >= params.patience {
                    return Phase::Converged;
                }
            } else {
                calm = 0;
            }
            if handoff && self.update_norm / lr < NEWTON_HANDOFF {
                return Phase::Handoff;
            }
        }
        Phase::Exhausted
    }
}

/// Indices not pinned at their floor by the gradient direction.
fn free_set(z: &Vars, g: &Vars) -> Vec<usize> {
    (0..NUM_VARS)
        .filter(|&i| {
            if !is_floored(i) || z[i] > FLOOR * (1.0 + 1e-9) {
                return true;
            }
            // minimizer pushed down, maximizer pushed down: both leave the box
            if is_max_var(i) {
                g[i] >= 0.0
            } else {
                g[i] <= 0.0
            }
        })
        .collect()
}

fn free_norm(g: &Vars, free: &[usize]) -> f64 {
    free.iter().map(|&i| g[i] * g[i]).sum::<f64>().sqrt()
}

/// Newton iterations on the gradient restricted to the free variables.
/// Returns the final point when it reaches `NEWTON_TOL`.
fn newton_polish(obj: &Objective<'_>, start: &Vars) -> Option<Vars> {
    let mut z = *start;
    let (_, mut g) = obj.value_and_gradient(&z);
    for _ in 0..60 {
        let free = free_set(&z, &g);
        let gnorm = free_norm(&g, &free);
        if gnorm < NEWTON_TOL {
            return Some(z);
        }
        let m = free.len();
        let mut hess = DMatrix::<f64>::zeros(m, m);
        for (col, &j) in free.iter().enumerate() {
            let h = 1e-5 * z[j].abs().max(1e-2);
            let mut up = z;
            let mut down = z;
            up[j] += h;
            down[j] -= h;
            if is_floored(j) && down[j] < FLOOR {
                down[j] = FLOOR;
            }
            let width = up[j] - down[j];
            let (_, gu) = obj.value_and_gradient(&up);
            let (_, gd) = obj.value_and_gradient(&down);
            for (row, &i) in free.iter().enumerate() {
                hess[(row, col)] = (gu[i] - gd[i]) / width;
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let rhs = DVector::from_iterator(m, free.iter().map(|&i| -g[i]));
        let step = hess.lu().solve(&rhs)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = z;
            for (k, &i) in free.iter().enumerate() {
                trial[i] += t * step[k];
            }
            let feasible = trial.iter().all(|x| x.is_finite())
                && (0..NUM_VARS).all(|i| !is_floored(i) || trial[i] >= FLOOR);
            if feasible {
                let (_, gt) = obj.value_and_gradient(&trial);
                if free_norm(&gt, &free) < (1.0 - 1e-4 * t) * gnorm {
                    z = trial;
                    g = gt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            let free = free_set(&z, &g);
            return (free_norm(&g, &free) < NEWTON_TOL).then_some(z);
        }
    }
    let free = free_set(&z, &g);
    (free_norm(&g, &free) < NEWTON_TOL).then_some(z)
}

/// Solves the min-max problem starting from `init` (or the default point).
///
/// GDA runs at `params.learning_rate`; a divergent run restarts from the
/// starting point with the step halved. With `newton_polish` the iterate is
/// handed to Newton once the gradient norm drops below 1e-3, and the result
/// must still pass the update-norm test with `patience` further GDA steps.
pub fn solve(
    dist: &JointSpectrumDistribution,
    params: &SolverParams,
    init: Option<&SaddlePoint>,
) -> Result<SaddlePoint> {
    let obj = Objective::new(dist, params)?;
    let mut start = init.copied().unwrap_or_else(SaddlePoint::initial).to_vars();
    project(&mut start);

    let mut lr = params.learning_rate;
    let mut total_iters = 0;
    let mut best = Gda { z: start, iterations: 0, update_norm: f64::INFINITY };
    let mut converged = false;

    'outer: for _ in 0..=MAX_HALVINGS {
        let mut run = Gda { z: start, iterations: 0, update_norm: f64::INFINITY };
        let mut newton_tried = false;
        loop {
            let budget = params.max_iters.saturating_sub(total_iters + run.iterations);
            if budget == 0 {
                total_iters += run.iterations;
                best = run;
                break 'outer;
            }
            let handoff = params.newton_polish && !newton_tried;
            match run.run(&obj, params, lr, budget, handoff) {
                Phase::Converged => {
                    converged = true;
                    total_iters += run.iterations;
                    best = run;
                    break 'outer;
                }
                Phase::Handoff => {
                    newton_tried = true;
                    if let Some(z) = newton_polish(&obj, &run.z) {
                        run.z = z;
                    }
                }
                Phase::Exhausted => {
                    total_iters += run.iterations;
                    best = run;
                    break 'outer;
                }
                Phase::Diverged => {
                    total_iters += run.iterations;
                    lr *= 0.5;
                    continue 'outer;
                }
            }
        }
    }

    let mut sp = SaddlePoint::from_vars(&best.z);
    sp.objective_value = obj.value(&best.z);
    sp.converged = converged;
    sp.iterations = total_iters;
    sp.update_norm = best.update_norm;
    Ok(sp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub poe_pos: f64,
    pub poe_neg: f64,
    pub class_gap: f64,
}

/// Per-class error `Q(μ ζ² / sqrt(α² + μ² ζ²))` at a converged saddle point.
pub fn predict(solution: &SaddlePoint, dist: &JointSpectrumDistribution) -> Result<TheoryPrediction> {
    if !solution.converged {
        return Err(Error::Unconverged {
            update_norm: solution.update_norm,
        });
    }
    let poe = |c: Class| {
        let v = solution.class(c);
        let zs = dist.zeta_sq(c);
        q_function(v.mu * zs / (v.alpha * v.alpha + v.mu * v.mu * zs).sqrt())
    };
    let (poe_pos, poe_neg) = (poe(Class::Pos), poe(Class::Neg));
    Ok(TheoryPrediction {
        poe_pos,
        poe_neg,
        class_gap: (poe_pos - poe_neg).abs(),
    })
}

/// Spread of predictions over randomly initialised solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub reference: TheoryPrediction,
    pub restarts: Vec<Option<TheoryPrediction>>,
    /// Largest |ΔPOE| between any converged restart and the reference.
    pub max_disagreement: f64,
}

impl RestartReport {
    /// Disagreement above 1e-4 suggests the saddle point is not unique.
    pub fn suspicious(&self) -> bool {
        self.max_disagreement > 1e-4
    }
}

pub fn solve_with_restarts(
    dist: &JointSpectrumDistribution,
    params: &SolverParams,
    restarts: usize,
    seed: u64,
) -> Result<RestartReport> {
    let reference = predict(&solve(dist, params, None)?, dist)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(restarts);
    let mut max_disagreement: f64 = 0.0;
    for _ in 0..restarts {
        let mut z = [0.0; NUM_VARS];
        for (i, x) in z.iter_mut().enumerate() {
            *x = if is_floored(i) {
                rng.random_range(0.2..2.0)
            } else {
                rng.random_range(-1.0..1.0)
            };
        }
        let init = SaddlePoint::from_vars(&z);
        let pred = predict(&solve(dist, params, Some(&init))?, dist).ok();
        if let Some(p) = pred {
            max_disagreement = max_disagreement
                .max((p.poe_pos - reference.poe_pos).abs())
                .max((p.poe_neg - reference.poe_neg).abs());
        }
        out.push(pred);
    }
    Ok(RestartReport {
        reference,
        restarts: out,
        max_disagreement,
    })
}
