//! Two-class Gaussian mixtures with diagonal, class-specific covariances.

mod erm;
mod poe;
mod simulation;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::class::Class;
use crate::error::{invalid, Error, Result};
use crate::rng::rng_from_seed;
use crate::theory::JointSpectrumDistribution;

pub use erm::{objective_value, train_erm, LinearEstimator, TrainingConfig};
pub use poe::{
    class_gap_proxy, class_gap_upper_bound, poe_closed_form, poe_monte_carlo, ClassErrorReport,
    ErrorSource, McEstimate,
};
pub use simulation::{run_simulation, run_simulation_with, SimulationSummary};

/// `x | y ~ N(y θ*, diag(λ^(y)))` with `P(y = +1) = prior_pos`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    target_signal: Vec<f64>,
    spectrum_pos: Vec<f64>,
    spectrum_neg: Vec<f64>,
    prior_pos: f64,
}

impl MixtureSpec {
    pub fn new(
        target_signal: Vec<f64>,
        spectrum_pos: Vec<f64>,
        spectrum_neg: Vec<f64>,
        prior_pos: f64,
    ) -> Result<Self> {
        let p = target_signal.len();
        if p == 0 {
            return invalid("mixture dimension must be positive");
        }
        if spectrum_pos.len() != p || spectrum_neg.len() != p {
            return Err(Error::Shape(format!(
                "signal has length {p}, spectra have lengths {} and {}",
                spectrum_pos.len(),
                spectrum_neg.len()
            )));
        }
        if target_signal.iter().any(|v| !v.is_finite()) {
            return invalid("target signal has non-finite entries");
        }
        for (name, s) in [("positive", &spectrum_pos), ("negative", &spectrum_neg)] {
            if let Some(j) = s.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
                return invalid(format!("{name} spectrum entry {j} = {} is not positive", s[j]));
            }
        }
        if !(prior_pos > 0.0 && prior_pos < 1.0) {
            return invalid(format!("prior_pos must lie in (0, 1), got {prior_pos}"));
        }
        Ok(Self {
            target_signal,
            spectrum_pos,
            spectrum_neg,
            prior_pos,
        })
    }

    /// Finite-`p` instance of an atom table. Atom `k` receives a block of
    /// coordinates sized by largest-remainder rounding of `prob_k * p`, and
    /// `θ*_j = t_k / sqrt(p)` on that block.
    pub fn from_distribution(dist: &JointSpectrumDistribution, p: usize, prior_pos: f64) -> Result<Self> {
        if p == 0 {
            return invalid("mixture dimension must be positive");
        }
        let atoms = dist.atoms();
        let exact: Vec<f64> = atoms.iter().map(|a| a.prob * p as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let missing = p - counts.iter().sum::<usize>();
        for &k in order.iter().take(missing) {
            counts[k] += 1;
        }
        let scale = (p as f64).sqrt().recip();
        let mut theta = Vec::with_capacity(p);
        let mut pos = Vec::with_capacity(p);
        let mut neg = Vec::with_capacity(p);
        for (a, &c) in atoms.iter().zip(&counts) {
            theta.extend(std::iter::repeat_n(a.t * scale, c));
            pos.extend(std::iter::repeat_n(a.l_pos, c));
            neg.extend(std::iter::repeat_n(a.l_neg, c));
        }
        Self::new(theta, pos, neg, prior_pos)
    }

    pub fn dimension(&self) -> usize {
        self.target_signal.len()
    }

    pub fn target_signal(&self) -> &[f64] {
        &self.target_signal
    }

    pub fn spectrum(&self, class: Class) -> &[f64] {
        match class {
            Class::Pos => &self.spectrum_pos,
            Class::Neg => &self.spectrum_neg,
        }
    }

    pub fn prior(&self, class: Class) -> f64 {
        match class {
            Class::Pos => self.prior_pos,
            Class::Neg => 1.0 - self.prior_pos,
        }
    }

    /// Writes `y θ* + sqrt(λ^(y)) ⊙ z` into `out`, with `sqrt_spec` the
    /// elementwise root of the class spectrum.
    pub(crate) fn fill_sample<R: rand::Rng + ?Sized>(
        &self,
        class: Class,
        sqrt_spec: &[f64],
        rng: &mut R,
        out: &mut [f64],
    ) {
        let y = class.sign();
        for ((o, &t), &s) in out.iter_mut().zip(&self.target_signal).zip(sqrt_spec) {
            let z: f64 = StandardNormal.sample(rng);
            *o = y * t + s * z;
        }
    }

    pub(crate) fn sqrt_spectrum(&self, class: Class) -> Vec<f64> {
        self.spectrum(class).iter().map(|l| l.sqrt()).collect()
    }
}

/// Row-major feature matrix with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<Class>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<Class>) -> Result<Self> {
        if dim == 0 {
            return invalid("feature dimension must be positive");
        }
        if features.len() != dim * labels.len() {
            return Err(Error::Shape(format!(
                "{} feature values for {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], Class)> {
        self.features.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    pub fn labels(&self) -> &[Class] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

/// Draws `n` labelled points; deterministic in `seed`.
pub fn sample_dataset(spec: &MixtureSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return invalid("sample size must be at least 1");
    }
    let p = spec.dimension();
    let roots = [spec.sqrt_spectrum(Class::Pos), spec.sqrt_spectrum(Class::Neg)];
    let mut rng = rng_from_seed(seed);
    let mut features = vec![0.0; n * p];
    let mut labels = Vec::with_capacity(n);
    for row in features.chunks_exact_mut(p) {
        let u: f64 = rand::Rng::random(&mut rng);
        let class = if u < spec.prior_pos { Class::Pos } else { Class::Neg };
        spec.fill_sample(class, &roots[class.index()], &mut rng, row);
        labels.push(class);
    }
    Dataset::new(p, features, labels)
}
