//! Quadrature rules for expectations over standard normal variables.

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;

use crate::error::{invalid, Result};
use crate::special::normal_pdf;

/// Nodes and weights such that `E f(G) ≈ Σ w_i f(g_i)` for `G ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct NormalRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl NormalRule {
    pub fn new(points: usize) -> Result<Self> {
        let Some(deg) = NonZeroUsize::new(points) else {
            return invalid("quadrature needs at least one node");
        };
        let rule = GaussHermite::new(deg);
        let scale = std::f64::consts::PI.sqrt().recip();
        let (nodes, weights) = rule
            .iter()
            .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w * scale))
            .unzip();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.iter().map(|(g, w)| w * f(g)).sum()
    }

    /// Tensor-product expectation over two independent standard normals.
    pub fn expect2(&self, mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for (g1, w1) in self.iter() {
            for (g2, w2) in self.iter() {
                acc += w1 * w2 * f(g1, g2);
            }
        }
        acc
    }
}

/// Normal mass outside `[-SPAN, SPAN]` is below 1e-32.
const SPAN: f64 = 12.0;

/// Gauss-Legendre pieces over `[-12, 12]` weighted by the normal density.
/// Splitting at the kinks of a piecewise-smooth integrand restores the
/// exponential convergence that a single Gauss-Hermite rule loses there.
#[derive(Debug, Clone)]
pub struct PiecewiseNormalRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl PiecewiseNormalRule {
    pub fn new(points: usize) -> Result<Self> {
        let Some(deg) = NonZeroUsize::new(points) else {
            return invalid("quadrature needs at least one node");
        };
        let (nodes, weights) = GaussLegendre::new(deg).iter().map(|&(x, w)| (x, w)).unzip();
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E f(G)` with every piece between consecutive `breaks` integrated
    /// separately. Breaks outside the span are ignored.
    pub fn expect_split(&self, breaks: &[f64], mut f: impl FnMut(f64, f64)) {
        let mut cuts: Vec<f64> = breaks.iter().copied().filter(|b| b.abs() < SPAN).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.insert(0, -SPAN);
        cuts.push(SPAN);
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            if half <= 0.0 {
                continue;
            }
            let mid = 0.5 * (a + b);
            for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                let g = mid + half * x;
                f(g, w * half * normal_pdf(g));
            }
        }
    }

    /// `E f(G)` for an integrand whose kinks lie at `breaks`.
    pub fn expect(&self, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        self.expect_split(breaks, |g, w| acc += w * f(g));
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let rule = NormalRule::new(64).unwrap();
        assert!((rule.expect(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!(rule.expect(|g| g).abs() < 1e-13);
        assert!((rule.expect(|g| g * g) - 1.0).abs() < 1e-12);
        assert!((rule.expect(|g| g.powi(4)) - 3.0).abs() < 1e-11);
        assert!((rule.expect(|g| (0.5 * g).cos()) - (-0.125f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn tensor_rule_factorizes() {
        let rule = NormalRule::new(16).unwrap();
        let v = rule.expect2(|a, b| (a + 2.0 * b).powi(2));
        assert!((v - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(NormalRule::new(0).is_err());
    }

    #[test]
    fn piecewise_rule_handles_kinks() {
        let rule = PiecewiseNormalRule::new(64).unwrap();
        assert!((rule.expect(&[], |_| 1.0) - 1.0).abs() < 1e-14);
        // E (c - G)_+^2 = (c^2 + 1) Φ(c) + c φ(c)
        let c = 0.3;
        let want = (c * c + 1.0) * crate::special::normal_cdf(c) + c * normal_pdf(c);
        let got = rule.expect(&[c], |g| (c - g).max(0.0).powi(2));
        assert!((got - want).abs() < 1e-14);
    }
}
