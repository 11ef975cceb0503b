//! Class bias, spectral quantile score, Pearson correlation and the
//! one-sided Welch test used to compare encoders.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::{student_t_cdf, student_t_two_sided};

/// Per-class accuracies of one encoder or plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    values: Vec<f64>,
    pub name: Option<String>,
}

impl AccuracyTable {
    pub fn new(values: Vec<f64>, name: Option<String>) -> Result<Self> {
        if values.len() < 2 {
            return invalid(format!("accuracy table needs at least 2 classes, got {}", values.len()));
        }
        if let Some(c) = values.iter().position(|a| !(0.0..=1.0).contains(a)) {
            return invalid(format!("accuracy of class {c} is {}, outside [0, 1]", values[c]));
        }
        Ok(Self { values, name })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortOrder {
    #[default]
    Descending,
    Ascending,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub class_bias: f64,
    pub sqs: f64,
    pub cutoff: usize,
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `(Σ top-L − Σ bottom-L) / (L · mean)` over the accuracies.
pub fn class_bias(acc: &AccuracyTable, cutoff: usize) -> Result<f64> {
    let c = acc.len();
    if cutoff == 0 || 2 * cutoff > c {
        return invalid(format!("cutoff L = {cutoff} must lie in [1, {}]", c / 2));
    }
    let s = sorted_desc(acc.values());
    let mean = s.iter().sum::<f64>() / c as f64;
    if mean <= 0.0 {
        return invalid("mean accuracy is zero, so class bias is undefined");
    }
    let top: f64 = s[..cutoff].iter().sum();
    let bottom: f64 = s[c - cutoff..].iter().sum();
    Ok((top - bottom) / (cutoff as f64 * mean))
}

/// `s_L / s_1` after sorting the scores in `order`.
pub fn sqs(scores: &[f64], cutoff: usize, order: SortOrder) -> Result<f64> {
    if cutoff == 0 || cutoff > scores.len() {
        return invalid(format!("cutoff L = {cutoff} must lie in [1, {}]", scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return invalid("scores must be finite");
    }
    let mut s = sorted_desc(scores);
    if order == SortOrder::Ascending {
        s.reverse();
    }
    if s[0] == 0.0 {
        return invalid("leading score is zero, so SQS is undefined");
    }
    Ok(s[cutoff - 1] / s[0])
}

pub fn bias_report(acc: &AccuracyTable, scores: &[f64], cutoff: usize, order: SortOrder) -> Result<BiasReport> {
    Ok(BiasReport {
        class_bias: class_bias(acc, cutoff)?,
        sqs: sqs(scores, cutoff, order)?,
        cutoff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Sample correlation coefficient; errors on length mismatch or constant input.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return invalid("an input is constant, so correlation is undefined");
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlation with two-sided p-value from `T_{n-2}`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<PearsonResult> {
    if x.len() < 3 {
        return invalid(format!("pearson needs at least 3 pairs, got {}", x.len()));
    }
    let r = pearson_r(x, y)?;
    let df = (x.len() - 2) as f64;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        student_t_two_sided(r * df.sqrt() / (1.0 - r * r).sqrt(), df)
    };
    Ok(PearsonResult { r, p_value, n: x.len() })
}

/// Which tail the one-sided p-value measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `P(T ≤ t)`: small when the first sample's mean is lower.
    Left,
}

pub const REJECTION_LEVELS: [f64; 2] = [0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub tail: Tail,
    /// `(level, p < 1 - level)` for each of the rejection levels.
    pub reject_at: [(f64, bool); 2],
}

impl WelchResult {
    pub fn rejects(&self, level: f64) -> Option<bool> {
        self.reject_at.iter().find(|(l, _)| *l == level).map(|&(_, r)| r)
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Unequal-variance t-test of `mean_a < mean_b` with Welch-Satterthwaite
/// degrees of freedom.
pub fn welch_one_sided(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return invalid(format!("welch test needs 2 samples per group, got {} and {}", a.len(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return invalid("welch test inputs must be finite");
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return invalid("both samples have zero variance");
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    let p = student_t_cdf(t, df);
    Ok(WelchResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        tail: Tail::Left,
        reject_at: REJECTION_LEVELS.map(|l| (l, p < 1.0 - l)),
    })
}

/// Welch test of `Δ(c) = acc_1(c) − acc_2(c)` over all classes against its
/// restriction to classes whose offset difference `a_1(c) − a_2(c)` is negative.
pub fn encoder_pair_test(
    acc_1: &AccuracyTable,
    acc_2: &AccuracyTable,
    offsets_1: &[f64],
    offsets_2: &[f64],
) -> Result<WelchResult> {
    let c = acc_1.len();
    if acc_2.len() != c || offsets_1.len() != c || offsets_2.len() != c {
        return Err(Error::Shape(format!(
            "class counts differ: accuracies {} and {}, offsets {} and {}",
            c,
            acc_2.len(),
            offsets_1.len(),
            offsets_2.len()
        )));
    }
    let delta: Vec<f64> = acc_1.values().iter().zip(acc_2.values()).map(|(a, b)| a - b).collect();
    let delta_neg: Vec<f64> = (0..c)
        .filter(|&k| offsets_1[k] - offsets_2[k] < 0.0)
        .map(|k| delta[k])
        .collect();
    if delta_neg.len() < 2 {
        return invalid(format!(
            "{} classes have a negative offset difference, at least 2 are needed",
            delta_neg.len()
        ));
    }
    welch_one_sided(&delta, &delta_neg)
}
