//! Moreau envelopes of the margin loss and of the square function.

use crate::error::{invalid, Result};
use crate::loss::Loss;

/// `min_v L(v) + (x - v)^2 / (2 tau)`.
pub fn moreau1(loss: Loss, x: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return invalid(format!("envelope parameter must be positive, got {tau}"));
    }
    Ok(loss.envelope(x, tau))
}

/// Minimizer of the second-order envelope of `v^2`.
pub fn prox2_square(x_pos: f64, x_neg: f64, tau_pos: f64, tau_neg: f64) -> f64 {
    (x_pos / tau_pos + x_neg / tau_neg) / (2.0 + 1.0 / tau_pos + 1.0 / tau_neg)
}

/// `min_v v^2 + (x+ - v)^2 / (2 tau+) + (x- - v)^2 / (2 tau-)`.
pub fn moreau2_square(x_pos: f64, x_neg: f64, tau_pos: f64, tau_neg: f64) -> Result<f64> {
    if !(tau_pos > 0.0 && tau_neg > 0.0) {
        return invalid(format!(
            "envelope parameters must be positive, got ({tau_pos}, {tau_neg})"
        ));
    }
    let v = prox2_square(x_pos, x_neg, tau_pos, tau_neg);
    Ok(v * v
        + (x_pos - v).powi(2) / (2.0 * tau_pos)
        + (x_neg - v).powi(2) / (2.0 * tau_neg))
}
