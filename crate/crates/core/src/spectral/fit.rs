use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spectral::ClassSpectrum;

/// Eigenvalues at or below this fraction of `λ_1` are left out of fits.
pub const DEFAULT_FIT_THRESHOLD: f64 = 1e-12;
const MIN_FIT_POINTS: usize = 10;

/// `λ_i ≈ a i^(-b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub offset: f64,
    pub decay: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

pub fn fit_power_law(spectrum: &ClassSpectrum) -> Result<PowerLawFit> {
    fit_power_law_with(&spectrum.eigenvalues, DEFAULT_FIT_THRESHOLD)
}

/// Least squares of `log λ_i` on `log i` over the leading eigenvalues above
/// `threshold * λ_1`.
pub fn fit_power_law_with(eigenvalues: &[f64], threshold: f64) -> Result<PowerLawFit> {
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    let cut = threshold * top;
    let used = if top > 0.0 {
        eigenvalues.iter().take_while(|&&l| l > cut).count()
    } else {
        0
    };
    if used < MIN_FIT_POINTS {
        return invalid(format!(
            "power-law fit needs {MIN_FIT_POINTS} eigenvalues above {cut:e}, found {used}"
        ));
    }
    let xs: Vec<f64> = (1..=used).map(|i| (i as f64).ln()).collect();
    let ys: Vec<f64> = eigenvalues[..used].iter().map(|l| l.ln()).collect();
    let n = used as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    // A flat spectrum is fitted exactly by b = 0.
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PowerLawFit {
        offset: intercept.exp(),
        decay: -slope,
        r_squared,
        points_used: used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRanks {
    pub rho_k: f64,
    pub r_k: f64,
    pub k: usize,
}

/// `ρ_k = Σ_{i>k} λ_i / λ_{k+1}` and `R_k = (Σ_{i>k} λ_i)² / Σ_{i>k} λ_i²`.
pub fn effective_ranks(spectrum: &ClassSpectrum, k: usize) -> Result<EffectiveRanks> {
    let tail = spectrum.eigenvalues.get(k..).unwrap_or(&[]);
    let Some(&lead) = tail.first() else {
        return invalid(format!("k = {k} leaves an empty tail of a spectrum of length {}", spectrum.len()));
    };
    if lead <= 0.0 {
        return invalid(format!("eigenvalue {} is zero, so the effective ranks are undefined", k + 1));
    }
    let sum: f64 = tail.iter().sum();
    let sum_sq: f64 = tail.iter().map(|l| l * l).sum();
    Ok(EffectiveRanks {
        rho_k: sum / lead,
        r_k: sum * sum / sum_sq,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: Vec<f64>) -> ClassSpectrum {
        ClassSpectrum::new(0, v, 2).unwrap()
    }

    #[test]
    fn exact_power_law_recovered() {
        let s = spec((1..=100).map(|i| 3.0 * (i as f64).powf(-1.5)).collect());
        let f = fit_power_law(&s).unwrap();
        assert!((f.offset - 3.0).abs() < 1e-9);
        assert!((f.decay - 1.5).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(f.points_used, 100);
    }

    #[test]
    fn flat_spectrum() {
        let f = fit_power_law(&spec(vec![5.0; 20])).unwrap();
        assert!((f.offset - 5.0).abs() < 1e-12);
        assert!(f.decay.abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        let mut v = vec![1.0; 9];
        v.extend([0.0; 20]);
        assert!(fit_power_law(&spec(v)).is_err());
    }

    #[test]
    fn effective_rank_examples() {
        let r = effective_ranks(&spec(vec![4.0, 1.0, 1.0]), 0).unwrap();
        assert_eq!((r.rho_k, r.r_k), (1.5, 2.0));
        let iso = effective_ranks(&spec(vec![1.0; 7]), 0).unwrap();
        assert_eq!((iso.rho_k, iso.r_k), (7.0, 7.0));
        let last = effective_ranks(&spec(vec![4.0, 2.0, 0.5]), 2).unwrap();
        assert_eq!((last.rho_k, last.r_k), (1.0, 1.0));
        assert!(effective_ranks(&spec(vec![1.0, 0.0]), 1).is_err());
        assert!(effective_ranks(&spec(vec![1.0]), 3).is_err());
    }

    #[test]
    fn effective_ranks_are_scale_free() {
        let a = effective_ranks(&spec(vec![3.0, 2.0, 0.7, 0.1]), 1).unwrap();
        let b = effective_ranks(&spec(vec![6.0, 4.0, 1.4, 0.2]), 1).unwrap();
        assert!((a.rho_k - b.rho_k).abs() < 1e-14 && (a.r_k - b.r_k).abs() < 1e-14);
    }
}
