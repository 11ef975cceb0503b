//! Margin losses `L(t)` used by ERM training and by the asymptotic objective.

use serde::{Deserialize, Serialize};

use crate::quadrature::{NormalRule, PiecewiseNormalRule};
use crate::special::{normal_cdf, normal_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `max(0, 1 - t)^2`
    #[default]
    SquaredHinge,
}

/// `E M(m + s G; tau)` for `G ~ N(0, 1)` and its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnvelopeMoments {
    pub value: f64,
    pub d_mean: f64,
    pub d_std: f64,
    pub d_tau: f64,
}

impl Loss {
    pub fn value(self, t: f64) -> f64 {
        match self {
            Loss::SquaredHinge => {
                let h = (1.0 - t).max(0.0);
                h * h
            }
        }
    }

    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Loss::SquaredHinge => -2.0 * (1.0 - t).max(0.0),
        }
    }

    /// Proximal point `argmin_v L(v) + (x - v)^2 / (2 tau)`. Requires `tau > 0`.
    pub fn prox(self, x: f64, tau: f64) -> f64 {
        match self {
            Loss::SquaredHinge => {
                if x >= 1.0 {
                    x
                } else {
                    (2.0 * tau + x) / (2.0 * tau + 1.0)
                }
            }
        }
    }

    /// First-order Moreau envelope `min_v L(v) + (x - v)^2 / (2 tau)`.
    pub fn envelope(self, x: f64, tau: f64) -> f64 {
        let v = self.prox(x, tau);
        self.value(v) + (x - v) * (x - v) / (2.0 * tau)
    }

    /// Points where the first-order envelope is not twice differentiable.
    pub fn envelope_breakpoints(self) -> &'static [f64] {
        match self {
            Loss::SquaredHinge => &[1.0],
        }
    }

    /// Closed-form Gaussian expectation of the envelope, when one exists.
    pub fn envelope_moments_exact(self, mean: f64, std: f64, tau: f64) -> Option<EnvelopeMoments> {
        match self {
            Loss::SquaredHinge => Some(squared_hinge_moments(mean, std, tau)),
        }
    }

    /// Quadrature estimate of the same moments. Derivatives use
    /// `dM/dx = (x - prox) / tau` and `dM/dtau = -(x - prox)^2 / (2 tau^2)`.
    pub fn envelope_moments_quadrature(
        self,
        rule: &NormalRule,
        mean: f64,
        std: f64,
        tau: f64,
    ) -> EnvelopeMoments {
        let mut out = EnvelopeMoments::default();
        for (g, w) in rule.iter() {
            self.accumulate(&mut out, mean, std, tau, g, w);
        }
        out
    }

    /// Same moments with the Gaussian integral split at the envelope
    /// breakpoints, which keeps the error exponentially small in the node count.
    pub fn envelope_moments_piecewise(
        self,
        rule: &PiecewiseNormalRule,
        mean: f64,
        std: f64,
        tau: f64,
    ) -> EnvelopeMoments {
        let mut out = EnvelopeMoments::default();
        if std > 0.0 {
            let breaks: Vec<f64> = self
                .envelope_breakpoints()
                .iter()
                .map(|k| (k - mean) / std)
                .collect();
            rule.expect_split(&breaks, |g, w| self.accumulate(&mut out, mean, std, tau, g, w));
        } else {
            self.accumulate(&mut out, mean, std, tau, 0.0, 1.0);
        }
        out
    }

    fn accumulate(self, out: &mut EnvelopeMoments, mean: f64, std: f64, tau: f64, g: f64, w: f64) {
        let x = mean + std * g;
        let v = self.prox(x, tau);
        let r = x - v;
        let dx = r / tau;
        out.value += w * (self.value(v) + r * r / (2.0 * tau));
        out.d_mean += w * dx;
        out.d_std += w * dx * g;
        out.d_tau -= w * r * r / (2.0 * tau * tau);
    }
}

// For x < 1 the envelope is (1 - x)^2 / (1 + 2 tau), so with c = 1 - m the
// expectation is E[(c - sG)_+^2] / (1 + 2 tau).
fn squared_hinge_moments(mean: f64, std: f64, tau: f64) -> EnvelopeMoments {
    let c = 1.0 - mean;
    let denom = 1.0 + 2.0 * tau;
    let (s2, ds_c, ds_s) = if std > 0.0 {
        let u = c / std;
        let cdf = normal_cdf(u);
        let pdf = normal_pdf(u);
        (
            (c * c + std * std) * cdf + c * std * pdf,
            2.0 * (c * cdf + std * pdf),
            2.0 * std * cdf,
        )
    } else {
        let h = c.max(0.0);
        (h * h, 2.0 * h, 0.0)
    };
    EnvelopeMoments {
        value: s2 / denom,
        d_mean: -ds_c / denom,
        d_std: ds_s / denom,
        d_tau: -2.0 * s2 / (denom * denom),
    }
}
