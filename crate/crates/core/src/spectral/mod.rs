//! Per-class covariance spectra of extracted features, power-law fits,
//! effective ranks and eigen-index correlation with class accuracy.

mod features;
mod fit;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::bias::pearson_r;
use crate::error::{invalid, Error, Result};
use crate::parallel::{map_indexed, Execution};

pub use features::{synthetic_class_features, FeatureMatrix, SyntheticFeatures};
pub use fit::{effective_ranks, fit_power_law, fit_power_law_with, EffectiveRanks, PowerLawFit, DEFAULT_FIT_THRESHOLD};

/// Eigenvalues sorted descending with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct Eigendecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigendecomposition {
    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l);
        }
        scaled * self.vectors.transpose()
    }
}

/// Symmetric eigendecomposition with eigenpairs sorted by descending value.
pub fn symmetric_eigen(matrix: &DMatrix<f64>) -> Result<Eigendecomposition> {
    if !matrix.is_square() {
        return Err(Error::Shape(format!("matrix is {}x{}, not square", matrix.nrows(), matrix.ncols())));
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return invalid("matrix has non-finite entries");
    }
    let eig = SymmetricEigen::new(matrix.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(matrix.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigendecomposition { values, vectors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpectrum {
    pub class_id: u32,
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    pub sample_count: usize,
}

impl ClassSpectrum {
    pub fn new(class_id: u32, mut eigenvalues: Vec<f64>, sample_count: usize) -> Result<Self> {
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return invalid(format!("class {class_id} spectrum has non-finite values"));
        }
        for l in eigenvalues.iter_mut() {
            *l = l.max(0.0);
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { class_id, eigenvalues, sample_count })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Centered rows of one class.
fn centered_rows(features: &FeatureMatrix, class_id: u32) -> Result<DMatrix<f64>> {
    let rows = features.class_rows(class_id);
    match rows.len() {
        0 => return invalid(format!("class {class_id} has no samples")),
        1 => return invalid(format!("class {class_id} has a single sample")),
        _ => {}
    }
    let d = features.cols();
    let mut mean = vec![0.0; d];
    for &i in &rows {
        for (m, x) in mean.iter_mut().zip(features.row(i)) {
            *m += x;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(DMatrix::from_fn(rows.len(), d, |r, c| features.row(rows[r])[c] - mean[c]))
}

/// `(1/|Ω_c|) Σ (z_i - z̄)(z_i - z̄)ᵀ` over the samples of `class_id`.
pub fn class_covariance(features: &FeatureMatrix, class_id: u32) -> Result<DMatrix<f64>> {
    let x = centered_rows(features, class_id)?;
    let n = x.nrows() as f64;
    Ok(x.tr_mul(&x) / n)
}

/// Eigenvalues of the class covariance. With fewer samples than dimensions
/// the nonzero part comes from the smaller Gram matrix `X Xᵀ / n` and the
/// rest of the spectrum is zero.
pub fn class_covariance_spectrum(features: &FeatureMatrix, class_id: u32) -> Result<ClassSpectrum> {
    let x = centered_rows(features, class_id)?;
    let (n, d) = x.shape();
    let values = if n < d {
        let gram = &x * x.transpose() / n as f64;
        let mut v = symmetric_eigen(&gram)?.values;
        v.resize(d, 0.0);
        v
    } else {
        symmetric_eigen(&(x.tr_mul(&x) / n as f64))?.values
    };
    ClassSpectrum::new(class_id, values, n)
}

/// Spectra of classes `0..C`, computed independently per class.
pub fn class_spectra(features: &FeatureMatrix, exec: Execution) -> Result<Vec<ClassSpectrum>> {
    map_indexed(exec, features.class_count(), |c| class_covariance_spectrum(features, c as u32))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenIndexCorrelation {
    /// Pearson coefficient across classes at each eigenvalue rank; NaN where
    /// the rank's eigenvalues are constant across classes.
    pub coefficients: Vec<f64>,
    /// Zero-based rank of the most negative coefficient.
    pub argmin: usize,
    pub min: f64,
}

/// Correlates `λ_j^(c)` with `acc[c]` across classes for every rank `j` of
/// the common spectrum length.
pub fn eigen_index_correlation(spectra: &[ClassSpectrum], accuracies: &[f64]) -> Result<EigenIndexCorrelation> {
    if spectra.len() < 3 {
        return invalid(format!("need at least 3 classes, got {}", spectra.len()));
    }
    if spectra.len() != accuracies.len() {
        return Err(Error::Shape(format!(
            "{} spectra but {} accuracies",
            spectra.len(),
            accuracies.len()
        )));
    }
    if accuracies.iter().all(|&a| a == accuracies[0]) {
        return invalid("accuracies are constant, so correlation is undefined");
    }
    let m = spectra.iter().map(ClassSpectrum::len).min().unwrap_or(0);
    let mut coefficients = Vec::with_capacity(m);
    let mut column = vec![0.0; spectra.len()];
    for j in 0..m {
        for (x, s) in column.iter_mut().zip(spectra) {
            *x = s.eigenvalues[j];
        }
        coefficients.push(pearson_r(&column, accuracies).unwrap_or(f64::NAN));
    }
    let (argmin, min) = coefficients
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_nan())
        .fold(None, |best: Option<(usize, f64)>, (j, &r)| match best {
            Some((_, b)) if b <= r => best,
            _ => Some((j, r)),
        })
        .ok_or_else(|| Error::Invalid("every eigenvalue rank is constant across classes".into()))?;
    Ok(EigenIndexCorrelation { coefficients, argmin, min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    fn matrix(rows: usize, cols: usize, values: Vec<f64>, labels: Vec<u32>) -> FeatureMatrix {
        assert_eq!(values.len(), rows * cols);
        FeatureMatrix::new(cols, values, labels).unwrap()
    }

    #[test]
    fn hand_computed_covariance() {
        let f = matrix(3, 2, vec![0.0, 0.0, 2.0, 0.0, 4.0, 0.0], vec![0, 0, 0]);
        let s = class_covariance_spectrum(&f, 0).unwrap();
        assert!((s.eigenvalues[0] - 8.0 / 3.0).abs() < 1e-14);
        assert_eq!(s.eigenvalues[1], 0.0);
        assert_eq!(s.sample_count, 3);
    }

    #[test]
    fn constant_class_has_zero_spectrum() {
        let f = matrix(4, 2, vec![1.0, 2.0, 1.0, 2.0, 3.0, 3.0, 5.0, 1.0], vec![0, 0, 1, 1]);
        let s = class_covariance_spectrum(&f, 0).unwrap();
        assert_eq!(s.eigenvalues, vec![0.0, 0.0]);
    }

    #[test]
    fn absent_or_singleton_class_named() {
        let f = matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0], vec![0, 0, 1, 1]);
        let err = class_covariance_spectrum(&f, 5).unwrap_err().to_string();
        assert!(err.contains("class 5"), "{err}");
    }

    #[test]
    fn gram_and_primal_paths_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (n, d) = (6, 10);
        let values: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        let f = matrix(n, d, values, vec![0; n]);
        let s = class_covariance_spectrum(&f, 0).unwrap();
        let direct = symmetric_eigen(&class_covariance(&f, 0).unwrap()).unwrap();
        assert_eq!(s.len(), d);
        for (a, b) in s.eigenvalues.iter().zip(&direct.values) {
            assert!((a - b.max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_invariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let (n, d) = (30, 5);
        let x = DMatrix::<f64>::from_fn(n, d, |_, _| rng.sample(StandardNormal));
        let q = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal)).qr().q();
        let y = &x * q;
        let as_rows = |m: &DMatrix<f64>| (0..n).flat_map(|r| (0..d).map(move |c| (r, c))).map(|(r, c)| m[(r, c)]).collect();
        let a = class_covariance_spectrum(&matrix(n, d, as_rows(&x), vec![0; n]), 0).unwrap();
        let b = class_covariance_spectrum(&matrix(n, d, as_rows(&y), vec![0; n]), 0).unwrap();
        for (u, v) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn diagonal_matrix_eigenvalues() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 3.0, -1.0, 2.0]));
        let e = symmetric_eigen(&m).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 0.5, -1.0]);
    }

    #[test]
    fn perfect_negative_correlation() {
        let spectra: Vec<ClassSpectrum> = (0..4)
            .map(|c| ClassSpectrum::new(c, vec![5.0, 1.0 + c as f64], 10).unwrap())
            .collect();
        let acc = [0.9, 0.8, 0.7, 0.6];
        let r = eigen_index_correlation(&spectra, &acc).unwrap();
        assert!(r.coefficients[0].is_nan());
        assert_eq!(r.argmin, 1);
        assert!((r.min + 1.0).abs() < 1e-12);

        let mut perm_s = spectra.clone();
        perm_s.swap(0, 3);
        let perm_a = [0.6, 0.8, 0.7, 0.9];
        let p = eigen_index_correlation(&perm_s, &perm_a).unwrap();
        assert!((p.min - r.min).abs() < 1e-15);

        assert!(eigen_index_correlation(&spectra, &[0.5; 4]).is_err());
        assert!(eigen_index_correlation(&spectra[..2], &acc[..2]).is_err());
    }
}
