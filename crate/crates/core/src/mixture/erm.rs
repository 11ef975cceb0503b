use serde::{Deserialize, Serialize};

use crate::class::Class;
use crate::error::{invalid, Error, Result};
use crate::loss::Loss;
use crate::mixture::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub ridge: f64,
    pub loss: Loss,
    pub sample_count: usize,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            ridge: 0.5,
            loss: Loss::SquaredHinge,
            sample_count: 1000,
            grad_tol: 1e-8,
            max_iters: 50_000,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge > 0.0 && self.ridge.is_finite()) {
            return invalid(format!("ridge must be positive, got {}", self.ridge));
        }
        if self.sample_count < 2 {
            return invalid("sample_count must be at least 2");
        }
        if !(self.grad_tol > 0.0) {
            return invalid("grad_tol must be positive");
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEstimator {
    weights: Vec<f64>,
}

impl LinearEstimator {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return invalid("estimator weights must be finite");
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| c * w).collect(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Signed margins `y_i <x_i, v>`.
fn margins(data: &Dataset, v: &[f64], out: &mut [f64]) {
    for (m, (row, y)) in out.iter_mut().zip(data.rows()) {
        *m = y.sign() * dot(row, v);
    }
}

fn loss_mean(loss: Loss, m: &[f64]) -> f64 {
    m.iter().map(|&t| loss.value(t)).sum::<f64>() / m.len() as f64
}

/// `(1/n) Σ L(y_i <x_i, θ>) + r ||θ||²`.
pub fn objective_value(data: &Dataset, theta: &[f64], config: &TrainingConfig) -> f64 {
    let mut m = vec![0.0; data.len()];
    margins(data, theta, &mut m);
    loss_mean(config.loss, &m) + config.ridge * dot(theta, theta)
}

fn gradient(data: &Dataset, loss: Loss, ridge: f64, theta: &[f64], m: &[f64], out: &mut [f64]) {
    let n = data.len() as f64;
    for (o, t) in out.iter_mut().zip(theta) {
        *o = 2.0 * ridge * t;
    }
    for ((row, y), &mi) in data.rows().zip(m) {
        let c = loss.derivative(mi);
        if c != 0.0 {
            let c = c * y.sign() / n;
            for (o, x) in out.iter_mut().zip(row) {
                *o += c * x;
            }
        }
    }
}

/// Full-batch gradient descent with Armijo backtracking. The trial step of
/// each iteration is the Barzilai-Borwein step from the previous one.
pub fn train_erm(data: &Dataset, config: &TrainingConfig) -> Result<LinearEstimator> {
    config.validate()?;
    if data.is_empty() {
        return invalid("training set is empty");
    }
    for class in Class::BOTH {
        if !data.labels().contains(&class) {
            return invalid(format!("training set has no samples of class {class}"));
        }
    }
    let (n, p) = (data.len(), data.dim());
    let loss = config.loss;
    let ridge = config.ridge;

    let mut theta = vec![0.0; p];
    let mut m = vec![0.0; n];
    let mut g = vec![0.0; p];
    let mut g_prev = vec![0.0; p];
    let mut dm = vec![0.0; n];
    let mut trial_m = vec![0.0; n];
    let mut step = 1.0;
    let mut last_move = 0.0;
    let mut f = loss_mean(loss, &m);

    gradient(data, loss, ridge, &theta, &m, &mut g);
    for it in 0..config.max_iters {
        let g2 = dot(&g, &g);
        let gnorm = g2.sqrt();
        if gnorm <= config.grad_tol {
            return LinearEstimator::new(theta);
        }
        if it > 0 {
            // s = -last_move * g_prev, y = g - g_prev
            let sy: f64 = g.iter().zip(&g_prev).map(|(a, b)| (a - b) * -b).sum::<f64>() * last_move;
            let ss = last_move * last_move * dot(&g_prev, &g_prev);
            step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { 1.0 };
        }
        margins(data, &g, &mut dm);
        let tg = dot(&theta, &g);
        let tt = dot(&theta, &theta);
        // slack for rounding in f once the decrease falls below machine precision
        let slack = 4.0 * f64::EPSILON * f.abs().max(1.0);
        let mut accepted = false;
        for _ in 0..80 {
            for ((tm, &mi), &di) in trial_m.iter_mut().zip(&m).zip(&dm) {
                *tm = mi - step * di;
            }
            let reg = tt - 2.0 * step * tg + step * step * g2;
            let ft = loss_mean(loss, &trial_m) + ridge * reg;
            if ft <= f - 1e-4 * step * g2 + slack {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NotConverged {
                iterations: it,
                grad_norm: gnorm,
            });
        }
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= step * gi;
        }
        std::mem::swap(&mut m, &mut trial_m);
        last_move = step;
        std::mem::swap(&mut g, &mut g_prev);
        gradient(data, loss, ridge, &theta, &m, &mut g);
        f = loss_mean(loss, &m) + ridge * dot(&theta, &theta);
    }
    let gnorm = dot(&g, &g).sqrt();
    if gnorm <= config.grad_tol {
        return LinearEstimator::new(theta);
    }
    Err(Error::NotConverged {
        iterations: config.max_iters,
        grad_norm: gnorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{sample_dataset, MixtureSpec};

    fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn zero_features_give_zero_weights() {
        let data = Dataset::new(3, vec![0.0; 12], vec![Class::Pos, Class::Neg, Class::Pos, Class::Neg]).unwrap();
        let est = train_erm(&data, &TrainingConfig::default()).unwrap();
        assert!(est.is_zero());
    }

    #[test]
    fn one_dimensional_matches_golden_section() {
        let data = Dataset::new(1, vec![2.0, -2.0], vec![Class::Pos, Class::Neg]).unwrap();
        let config = TrainingConfig::default();
        let est = train_erm(&data, &config).unwrap();
        let oracle = golden_section(|t| (1.0 - 2.0 * t).max(0.0).powi(2) + 0.5 * t * t, -5.0, 5.0);
        assert!((oracle - 4.0 / 9.0).abs() < 1e-8);
        assert!((est.weights()[0] - oracle).abs() < 1e-8);
    }

    #[test]
    fn requires_both_labels() {
        let data = Dataset::new(1, vec![1.0, 2.0], vec![Class::Pos, Class::Pos]).unwrap();
        assert!(train_erm(&data, &TrainingConfig::default()).is_err());
    }

    #[test]
    fn iteration_budget_is_reported() {
        let spec = MixtureSpec::new(vec![0.5; 20], vec![1.0; 20], vec![2.0; 20], 0.5).unwrap();
        let data = sample_dataset(&spec, 60, 1).unwrap();
        let config = TrainingConfig { max_iters: 2, ..Default::default() };
        match train_erm(&data, &config) {
            Err(Error::NotConverged { grad_norm, .. }) => assert!(grad_norm > 1e-8),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn reaches_tolerance_and_decreases_objective() {
        let spec = MixtureSpec::new(vec![0.2; 50], vec![2.0; 50], vec![0.5; 50], 0.4).unwrap();
        let data = sample_dataset(&spec, 120, 5).unwrap();
        let config = TrainingConfig::default();
        let est = train_erm(&data, &config).unwrap();
        let f0 = objective_value(&data, &vec![0.0; 50], &config);
        assert!(objective_value(&data, est.weights(), &config) <= f0);
    }

    #[test]
    fn permutation_and_reflection_invariance() {
        let spec = MixtureSpec::new(vec![0.3; 10], vec![1.5; 10], vec![0.7; 10], 0.5).unwrap();
        let data = sample_dataset(&spec, 40, 9).unwrap();
        let config = TrainingConfig::default();
        let base = train_erm(&data, &config).unwrap();

        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in (0..data.len()).rev() {
            feats.extend(data.row(i).iter().map(|x| -x));
            labels.push(data.labels()[i].other());
        }
        let mirrored = Dataset::new(10, feats, labels).unwrap();
        let other = train_erm(&mirrored, &config).unwrap();
        for (a, b) in base.weights().iter().zip(other.weights()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(base, train_erm(&data, &config).unwrap());
    }
}
