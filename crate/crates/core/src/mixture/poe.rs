use serde::{Deserialize, Serialize};

use crate::class::Class;
use crate::error::{invalid, Result};
use crate::mixture::{LinearEstimator, MixtureSpec};
use crate::rng::{derive_seed, rng_from_seed};
use crate::special::{q_function, INV_SQRT_2PI};

const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSource {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub rate: f64,
    pub std_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassErrorReport {
    pub poe_pos: f64,
    pub poe_neg: f64,
    pub class_gap: f64,
    pub source: ErrorSource,
    /// Per-class standard errors `(pos, neg)` for Monte-Carlo reports.
    pub mc_std: Option<(f64, f64)>,
}

impl ClassErrorReport {
    pub fn closed_form(est: &LinearEstimator, spec: &MixtureSpec) -> Result<Self> {
        let pos = poe_closed_form(est, spec, Class::Pos)?;
        let neg = poe_closed_form(est, spec, Class::Neg)?;
        Ok(Self::from_parts(pos, neg, ErrorSource::ClosedForm, None))
    }

    pub fn monte_carlo(est: &LinearEstimator, spec: &MixtureSpec, test_n: usize, seed: u64) -> Result<Self> {
        let pos = poe_monte_carlo(est, spec, Class::Pos, test_n, derive_seed(seed, 0))?;
        let neg = poe_monte_carlo(est, spec, Class::Neg, test_n, derive_seed(seed, 1))?;
        Ok(Self::from_parts(
            pos.rate,
            neg.rate,
            ErrorSource::MonteCarlo,
            Some((pos.std_error, neg.std_error)),
        ))
    }

    fn from_parts(poe_pos: f64, poe_neg: f64, source: ErrorSource, mc_std: Option<(f64, f64)>) -> Self {
        Self {
            poe_pos,
            poe_neg,
            class_gap: (poe_pos - poe_neg).abs(),
            source,
            mc_std,
        }
    }

    pub fn poe(&self, class: Class) -> f64 {
        match class {
            Class::Pos => self.poe_pos,
            Class::Neg => self.poe_neg,
        }
    }
}

fn check_shape(est: &LinearEstimator, spec: &MixtureSpec) -> Result<()> {
    if est.dim() != spec.dimension() {
        return Err(crate::Error::Shape(format!(
            "estimator has dimension {}, mixture has {}",
            est.dim(),
            spec.dimension()
        )));
    }
    Ok(())
}

/// `(<θ̂, θ*>, ||Σ_y^{1/2} θ̂||)`.
fn margin_moments(est: &LinearEstimator, spec: &MixtureSpec, class: Class) -> (f64, f64) {
    let w = est.weights();
    let signal = w.iter().zip(spec.target_signal()).map(|(a, b)| a * b).sum();
    let var: f64 = w.iter().zip(spec.spectrum(class)).map(|(a, l)| l * a * a).sum();
    (signal, var.sqrt())
}

/// `Q(<θ̂, θ*> / ||Σ_y^{1/2} θ̂||)`.
pub fn poe_closed_form(est: &LinearEstimator, spec: &MixtureSpec, class: Class) -> Result<f64> {
    check_shape(est, spec)?;
    if est.is_zero() {
        return invalid("estimator is zero, so its error is undefined");
    }
    let (signal, std) = margin_moments(est, spec, class);
    Ok(q_function(signal / std))
}

/// Error rate of `est` on `test_n` fresh class-`class` samples. A zero
/// margin counts as an error.
pub fn poe_monte_carlo(
    est: &LinearEstimator,
    spec: &MixtureSpec,
    class: Class,
    test_n: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_shape(est, spec)?;
    if test_n < 100 {
        return invalid(format!("test_n must be at least 100, got {test_n}"));
    }
    let roots = spec.sqrt_spectrum(class);
    let y = class.sign();
    let mut x = vec![0.0; spec.dimension()];
    let mut errors = 0usize;
    for (chunk, start) in (0..test_n).step_by(MC_CHUNK).enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, chunk as u64));
        for _ in start..(start + MC_CHUNK).min(test_n) {
            spec.fill_sample(class, &roots, &mut rng, &mut x);
            let m: f64 = x.iter().zip(est.weights()).map(|(a, b)| a * b).sum();
            if y * m <= 0.0 {
                errors += 1;
            }
        }
    }
    let rate = errors as f64 / test_n as f64;
    Ok(McEstimate {
        rate,
        std_error: (rate * (1.0 - rate) / test_n as f64).sqrt(),
        samples: test_n,
    })
}

/// `|Σ_j (λ_j^(-) - λ_j^(+)) θ̂_j²|`.
pub fn class_gap_proxy(est: &LinearEstimator, spec: &MixtureSpec) -> Result<f64> {
    check_shape(est, spec)?;
    let s: f64 = est
        .weights()
        .iter()
        .zip(spec.spectrum(Class::Neg).iter().zip(spec.spectrum(Class::Pos)))
        .map(|(w, (ln, lp))| (ln - lp) * w * w)
        .sum();
    Ok(s.abs())
}

/// Mean-value bound on `|POE_+ - POE_-|`: the Gaussian density at the
/// smaller class margin times the spread of the two margins.
pub fn class_gap_upper_bound(est: &LinearEstimator, spec: &MixtureSpec) -> Result<f64> {
    check_shape(est, spec)?;
    if est.is_zero() {
        return invalid("estimator is zero, so the class gap bound is undefined");
    }
    let (signal, s_pos) = margin_moments(est, spec, Class::Pos);
    let (_, s_neg) = margin_moments(est, spec, Class::Neg);
    let z_min = (signal / s_pos).abs().min((signal / s_neg).abs());
    let density = INV_SQRT_2PI * (-0.5 * z_min * z_min).exp();
    Ok(density * signal.abs() * (1.0 / s_pos - 1.0 / s_neg).abs())
}
