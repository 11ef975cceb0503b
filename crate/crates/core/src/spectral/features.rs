use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::rng::rng_from_seed;

/// Row-major `n x d` features with class ids `0..C`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    cols: usize,
    values: Vec<f64>,
    labels: Vec<u32>,
    classes: usize,
}

impl FeatureMatrix {
    /// Requires contiguous class ids from 0 with at least two samples each.
    pub fn new(cols: usize, values: Vec<f64>, labels: Vec<u32>) -> Result<Self> {
        if cols == 0 {
            return invalid("feature dimension must be positive");
        }
        if values.len() != cols * labels.len() {
            return Err(Error::Shape(format!(
                "{} values for {} rows of dimension {cols}",
                values.len(),
                labels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("features contain non-finite values");
        }
        let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut counts = vec![0usize; classes];
        for &l in &labels {
            counts[l as usize] += 1;
        }
        if let Some(c) = counts.iter().position(|&k| k < 2) {
            return invalid(format!("class {c} has {} samples, at least 2 are required", counts[c]));
        }
        Ok(Self { cols, values, labels, classes })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub(crate) fn class_rows(&self, class_id: u32) -> Vec<usize> {
        (0..self.rows()).filter(|&i| self.labels[i] == class_id).collect()
    }
}

/// Features together with the accuracies they were generated to match.
#[derive(Debug, Clone)]
pub struct SyntheticFeatures {
    pub features: FeatureMatrix,
    pub accuracies: Vec<f64>,
}

/// Class `c` of `classes` draws `N(0, s_c² diag(i^-decay))` with
/// `s_c = 1 + c / classes`; its accuracy falls linearly from 0.9 to 0.5
/// so larger spectra go with lower accuracy.
pub fn synthetic_class_features(
    classes: usize,
    per_class: usize,
    dim: usize,
    decay: f64,
    seed: u64,
) -> Result<SyntheticFeatures> {
    if classes < 2 || per_class < 2 || dim == 0 {
        return invalid("need at least 2 classes, 2 samples per class and one dimension");
    }
    let mut rng = rng_from_seed(seed);
    let base: Vec<f64> = (1..=dim).map(|i| (i as f64).powf(-0.5 * decay)).collect();
    let mut values = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let scale = 1.0 + c as f64 / classes as f64;
        for _ in 0..per_class {
            for &b in &base {
                let z: f64 = rng.sample(StandardNormal);
                values.push(scale * b * z);
            }
            labels.push(c as u32);
        }
    }
    let accuracies = (0..classes)
        .map(|c| 0.9 - 0.4 * c as f64 / (classes - 1) as f64)
        .collect();
    Ok(SyntheticFeatures {
        features: FeatureMatrix::new(dim, values, labels)?,
        accuracies,
    })
}
