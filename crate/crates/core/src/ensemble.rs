//! Spectral re-factoring: per class, take the logit from the augmentation
//! plan whose class spectrum has the smallest power-law offset.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::bias::{class_bias, AccuracyTable};
use crate::error::{invalid, Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::spectral::PowerLawFit;

/// `K x C` offsets, row `ℓ` belonging to plan `plan_names[ℓ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetMatrix {
    plan_names: Vec<String>,
    classes: usize,
    values: Vec<f64>,
}

impl OffsetMatrix {
    pub fn new(plan_names: Vec<String>, classes: usize, values: Vec<f64>) -> Result<Self> {
        let k = plan_names.len();
        if k < 2 {
            return invalid(format!("ensembling needs at least 2 plans, got {k}"));
        }
        if classes == 0 {
            return invalid("offset matrix needs at least one class");
        }
        if values.len() != k * classes {
            return Err(Error::Shape(format!("{} offsets for {k} plans and {classes} classes", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("offsets must be finite");
        }
        let mut seen = HashSet::new();
        for name in &plan_names {
            if !seen.insert(name.as_str()) {
                return invalid(format!("plan name {name:?} appears twice"));
            }
        }
        Ok(Self { plan_names, classes, values })
    }

    pub fn plans(&self) -> usize {
        self.plan_names.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn plan_names(&self) -> &[String] {
        &self.plan_names
    }

    pub fn get(&self, plan: usize, class: usize) -> f64 {
        self.values[plan * self.classes + class]
    }

    pub fn row(&self, plan: usize) -> &[f64] {
        &self.values[plan * self.classes..(plan + 1) * self.classes]
    }
}

/// Per-class fits of one augmentation plan, keyed by class id.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanFits {
    pub name: String,
    pub fits: BTreeMap<u32, PowerLawFit>,
}

/// Stacks the fitted offsets. Every plan must cover the same classes `0..C`.
pub fn build_offset_matrix(plans: &[PlanFits]) -> Result<OffsetMatrix> {
    let all: BTreeSet<u32> = plans.iter().flat_map(|p| p.fits.keys().copied()).collect();
    let classes = all.last().map_or(0, |&c| c as usize + 1);
    let mut missing = Vec::new();
    for p in plans {
        for c in 0..classes as u32 {
            if !p.fits.contains_key(&c) {
                missing.push(format!("({}, {c})", p.name));
            }
        }
    }
    if !missing.is_empty() {
        return invalid(format!("missing (plan, class) fits: {}", missing.join(", ")));
    }
    let values = plans
        .iter()
        .flat_map(|p| p.fits.values().map(|f| f.offset))
        .collect();
    OffsetMatrix::new(plans.iter().map(|p| p.name.clone()).collect(), classes, values)
}

/// `ℓ*(c) = argmin_ℓ M[ℓ][c]`, ties to the lowest plan index.
pub fn select_plans(m: &OffsetMatrix) -> Vec<usize> {
    (0..m.classes())
        .map(|c| {
            let mut best = 0;
            for l in 1..m.plans() {
                if m.get(l, c) < m.get(best, c) {
                    best = l;
                }
            }
            best
        })
        .collect()
}

/// `K x N x C` logits with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewLogits {
    plans: usize,
    samples: usize,
    classes: usize,
    values: Vec<f64>,
    labels: Option<Vec<u32>>,
}

impl MultiViewLogits {
    pub fn new(plans: usize, samples: usize, classes: usize, values: Vec<f64>, labels: Option<Vec<u32>>) -> Result<Self> {
        if values.len() != plans * samples * classes {
            return Err(Error::Shape(format!(
                "{} logits for shape {plans} x {samples} x {classes}",
                values.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != samples {
                return Err(Error::Shape(format!("{} labels for {samples} samples", l.len())));
            }
            if let Some(bad) = l.iter().find(|&&y| y as usize >= classes) {
                return invalid(format!("label {bad} is outside 0..{classes}"));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("logits must be finite");
        }
        Ok(Self { plans, samples, classes, values, labels })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.plans, self.samples, self.classes)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn logits(&self, plan: usize, sample: usize) -> &[f64] {
        let start = (plan * self.samples + sample) * self.classes;
        &self.values[start..start + self.classes]
    }

    /// Each plan's logits shifted and scaled to zero mean and unit variance.
    pub fn standardized(&self) -> Self {
        let block = self.samples * self.classes;
        let mut values = self.values.clone();
        for chunk in values.chunks_mut(block.max(1)) {
            let n = chunk.len() as f64;
            let mean = chunk.iter().sum::<f64>() / n;
            let sd = (chunk.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            let scale = if sd > 0.0 { 1.0 / sd } else { 1.0 };
            chunk.iter_mut().for_each(|v| *v = (*v - mean) * scale);
        }
        Self { values, labels: self.labels.clone(), ..*self }
    }
}

/// Index of the largest entry, ties to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refactored {
    pub assignment: Vec<usize>,
    pub predictions: Vec<u32>,
    /// `N x C` row-major re-factored logits.
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleOptions {
    /// Standardize each plan's logits before mixing.
    pub standardize: bool,
    pub execution: Execution,
}

fn check_shapes(logits: &MultiViewLogits, m: &OffsetMatrix) -> Result<()> {
    let (k, _, c) = logits.shape();
    if k != m.plans() || c != m.classes() {
        return Err(Error::Shape(format!(
            "logits have {k} plans and {c} classes, offsets have {} and {}",
            m.plans(),
            m.classes()
        )));
    }
    Ok(())
}

/// `l̂_c = L[ℓ*(c)][n][c]` for every sample, then argmax over classes.
pub fn refactor(logits: &MultiViewLogits, m: &OffsetMatrix, options: EnsembleOptions) -> Result<Refactored> {
    check_shapes(logits, m)?;
    let standardized;
    let src = if options.standardize {
        standardized = logits.standardized();
        &standardized
    } else {
        logits
    };
    let assignment = select_plans(m);
    let (_, n, c) = src.shape();
    const CHUNK: usize = 256;
    let chunks = map_indexed(options.execution, n.div_ceil(CHUNK), |b| {
        let mut out = Vec::with_capacity(CHUNK * c);
        for s in b * CHUNK..((b + 1) * CHUNK).min(n) {
            out.extend(assignment.iter().enumerate().map(|(cls, &plan)| src.logits(plan, s)[cls]));
        }
        out
    });
    let out: Vec<f64> = chunks.concat();
    let predictions = out.chunks_exact(c.max(1)).map(|row| argmax(row) as u32).collect();
    Ok(Refactored { assignment, predictions, logits: out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub plan_names: Vec<String>,
    pub plan_accuracies: Vec<f64>,
    pub ensemble_accuracy: f64,
    /// `K x C` per-class accuracy of each plan.
    pub plan_class_accuracies: Vec<Vec<f64>>,
    pub ensemble_class_accuracies: Vec<f64>,
    pub plan_class_bias: Vec<f64>,
    pub ensemble_class_bias: f64,
    pub cutoff: usize,
    pub assignment: Vec<usize>,
}

fn accuracies(pred: impl Iterator<Item = u32>, labels: &[u32], classes: usize) -> (f64, Vec<f64>) {
    let mut hit = vec![0usize; classes];
    let mut seen = vec![0usize; classes];
    for (p, &y) in pred.zip(labels) {
        seen[y as usize] += 1;
        if p == y {
            hit[y as usize] += 1;
        }
    }
    let overall = hit.iter().sum::<usize>() as f64 / labels.len() as f64;
    let per_class = hit.iter().zip(&seen).map(|(&h, &s)| h as f64 / s as f64).collect();
    (overall, per_class)
}

/// Accuracy of every plan and of the re-factored ensemble. Class bias uses
/// `cutoff`, reduced to `C / 2` when larger.
pub fn evaluate(logits: &MultiViewLogits, m: &OffsetMatrix, options: EnsembleOptions, cutoff: usize) -> Result<EnsembleReport> {
    check_shapes(logits, m)?;
    let labels = logits
        .labels()
        .ok_or_else(|| Error::Invalid("logits carry no labels to evaluate against".into()))?;
    let (k, n, c) = logits.shape();
    if n == 0 {
        return invalid("no samples to evaluate");
    }
    let mut present = vec![false; c];
    labels.iter().for_each(|&y| present[y as usize] = true);
    if let Some(missing) = present.iter().position(|p| !p) {
        return invalid(format!("class {missing} has no labelled samples"));
    }
    let cutoff = cutoff.min(c / 2).max(1);
    let bias = |acc: &[f64]| AccuracyTable::new(acc.to_vec(), None).and_then(|t| class_bias(&t, cutoff)).unwrap_or(f64::NAN);

    let mut plan_accuracies = Vec::with_capacity(k);
    let mut plan_class_accuracies = Vec::with_capacity(k);
    for plan in 0..k {
        let (overall, per_class) = accuracies((0..n).map(|s| argmax(logits.logits(plan, s)) as u32), labels, c);
        plan_accuracies.push(overall);
        plan_class_accuracies.push(per_class);
    }
    let refactored = refactor(logits, m, options)?;
    let (ensemble_accuracy, ensemble_class_accuracies) = accuracies(refactored.predictions.iter().copied(), labels, c);
    Ok(EnsembleReport {
        plan_names: m.plan_names().to_vec(),
        plan_class_bias: plan_class_accuracies.iter().map(|a| bias(a)).collect(),
        ensemble_class_bias: bias(&ensemble_class_accuracies),
        plan_accuracies,
        ensemble_accuracy,
        plan_class_accuracies,
        ensemble_class_accuracies,
        cutoff,
        assignment: refactored.assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("plan{i}")).collect()
    }

    fn fit(offset: f64) -> PowerLawFit {
        PowerLawFit { offset, decay: 1.0, r_squared: 1.0, points_used: 10 }
    }

    #[test]
    fn hand_selection_and_refactor() {
        let m = OffsetMatrix::new(names(2), 3, vec![1.0, 5.0, 2.0, 3.0, 1.0, 1.0]).unwrap();
        assert_eq!(select_plans(&m), vec![0, 1, 1]);
        let logits = MultiViewLogits::new(2, 1, 3, vec![0.9, 0.1, 0.3, 0.2, 0.8, 0.5], None).unwrap();
        let r = refactor(&logits, &m, EnsembleOptions::default()).unwrap();
        assert_eq!(r.logits, vec![0.9, 0.8, 0.5]);
        assert_eq!(r.predictions, vec![0]);
    }

    #[test]
    fn ties_and_shifts() {
        let m = OffsetMatrix::new(names(3), 2, vec![1.0, 2.0, 1.0, 0.5, 1.0, 2.0]).unwrap();
        assert_eq!(select_plans(&m), vec![0, 1]);
        let shifted = OffsetMatrix::new(names(3), 2, vec![11.0, 12.0, 11.0, 10.5, 11.0, 12.0]).unwrap();
        assert_eq!(select_plans(&shifted), select_plans(&m));
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn matrix_validation() {
        assert!(OffsetMatrix::new(names(1), 2, vec![1.0, 2.0]).is_err());
        assert!(OffsetMatrix::new(vec!["a".into(), "a".into()], 1, vec![1.0, 2.0]).is_err());
        assert!(OffsetMatrix::new(names(2), 2, vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn offsets_from_fits() {
        let plan = |name: &str, offs: &[f64]| PlanFits {
            name: name.into(),
            fits: offs.iter().enumerate().map(|(c, &o)| (c as u32, fit(o))).collect(),
        };
        let m = build_offset_matrix(&[plan("a", &[1.0, 2.0]), plan("b", &[3.0, 0.5])]).unwrap();
        assert_eq!(m.row(1), &[3.0, 0.5]);
        let mut partial = plan("c", &[1.0, 2.0]);
        partial.fits.remove(&1);
        let err = build_offset_matrix(&[plan("a", &[1.0, 2.0]), partial]).unwrap_err().to_string();
        assert!(err.contains("(c, 1)"), "{err}");
        assert!(build_offset_matrix(&[plan("a", &[1.0, 2.0])]).is_err());
    }

    #[test]
    fn evaluation_reports() {
        let m = OffsetMatrix::new(names(2), 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        // plan 0 is right on class 0, plan 1 on class 1
        let values = vec![
            2.0, 0.0, 2.0, 0.0, //
            0.0, 2.0, 0.0, 2.0,
        ];
        let logits = MultiViewLogits::new(2, 2, 2, values, Some(vec![0, 1])).unwrap();
        let r = evaluate(&logits, &m, EnsembleOptions::default(), 100).unwrap();
        assert_eq!(r.plan_accuracies, vec![0.5, 0.5]);
        assert_eq!(r.ensemble_accuracy, 0.5);
        assert_eq!(r.cutoff, 1);
        let unlabeled = MultiViewLogits::new(2, 1, 2, vec![0.0; 4], None).unwrap();
        assert!(evaluate(&unlabeled, &m, EnsembleOptions::default(), 1).is_err());
    }

    #[test]
    fn standardization_keeps_shape() {
        let logits = MultiViewLogits::new(2, 2, 2, vec![1.0, 2.0, 3.0, 4.0, 10.0, 10.0, 10.0, 10.0], None).unwrap();
        let s = logits.standardized();
        let first = &s.values()[..4];
        assert!(first.iter().sum::<f64>().abs() < 1e-12);
        assert_eq!(&s.values()[4..], &[0.0; 4]);
    }
}
