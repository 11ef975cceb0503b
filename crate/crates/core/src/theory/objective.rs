//! The twelve-variable scalar min-max objective and its gradient.
//!
//! Variables are stored class-major as `[μ, α, τ, β, γ, η]` for class +1
//! followed by the same six for class -1. `(μ, α, τ)` are minimized and
//! `(β, γ, η)` maximized.

use serde::{Deserialize, Serialize};

use crate::class::Class;
use crate::error::{invalid, Result};
use crate::quadrature::{NormalRule, PiecewiseNormalRule};
use crate::theory::distribution::JointSpectrumDistribution;
use crate::theory::moreau::prox2_square;
use crate::theory::SolverParams;

pub const NUM_VARS: usize = 12;
pub const MU: usize = 0;
pub const ALPHA: usize = 1;
pub const TAU: usize = 2;
pub const BETA: usize = 3;
pub const GAMMA: usize = 4;
pub const ETA: usize = 5;

/// Lower bound kept on variables that appear in denominators.
pub const FLOOR: f64 = 1e-8;

pub(crate) const FLOORED: [usize; 4] = [ALPHA, TAU, BETA, GAMMA];

pub(crate) fn is_max_var(i: usize) -> bool {
    i % 6 >= BETA
}

pub fn is_floored(i: usize) -> bool {
    FLOORED.contains(&(i % 6))
}

/// How the Gaussian expectations are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    /// Closed forms: the loss envelope is piecewise quadratic and the
    /// square-function envelope is a quadratic form in its arguments.
    #[default]
    Exact,
    /// Numerical integration with `quadrature_nodes` per Gaussian dimension:
    /// a tensor Gauss-Hermite rule for the square-function envelope and
    /// Gauss-Legendre pieces split at the loss breakpoints for the loss envelope.
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassVars {
    pub mu: f64,
    pub alpha: f64,
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl ClassVars {
    fn to_slice(self) -> [f64; 6] {
        [self.mu, self.alpha, self.tau, self.beta, self.gamma, self.eta]
    }

    fn from_slice(v: &[f64]) -> Self {
        Self {
            mu: v[MU],
            alpha: v[ALPHA],
            tau: v[TAU],
            beta: v[BETA],
            gamma: v[GAMMA],
            eta: v[ETA],
        }
    }
}

/// A point of the min-max problem together with solver metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub pos: ClassVars,
    pub neg: ClassVars,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub update_norm: f64,
}

impl SaddlePoint {
    /// Constrained variables at 1, `μ = 0.5`, `η = 0`.
    pub fn initial() -> Self {
        let v = ClassVars {
            mu: 0.5,
            alpha: 1.0,
            tau: 1.0,
            beta: 1.0,
            gamma: 1.0,
            eta: 0.0,
        };
        Self::from_vars(&Self::pack(v, v))
    }

    pub fn class(&self, class: Class) -> &ClassVars {
        match class {
            Class::Pos => &self.pos,
            Class::Neg => &self.neg,
        }
    }

    fn pack(pos: ClassVars, neg: ClassVars) -> [f64; NUM_VARS] {
        let mut z = [0.0; NUM_VARS];
        z[..6].copy_from_slice(&pos.to_slice());
        z[6..].copy_from_slice(&neg.to_slice());
        z
    }

    pub fn to_vars(&self) -> [f64; NUM_VARS] {
        Self::pack(self.pos, self.neg)
    }

    pub fn from_vars(z: &[f64; NUM_VARS]) -> Self {
        Self {
            pos: ClassVars::from_slice(&z[..6]),
            neg: ClassVars::from_slice(&z[6..]),
            objective_value: f64::NAN,
            converged: false,
            iterations: 0,
            update_norm: f64::NAN,
        }
    }

    /// The point with class roles exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pos: self.neg,
            neg: self.pos,
            ..*self
        }
    }
}

/// Objective bound to a distribution and parameter set.
pub struct Objective<'a> {
    dist: &'a JointSpectrumDistribution,
    params: &'a SolverParams,
    zeta_sq: [f64; 2],
    rule: Option<(NormalRule, PiecewiseNormalRule)>,
}

// Per-atom arguments of the square-function envelope for one class.
#[derive(Clone, Copy)]
struct EnvelopeArgs {
    a: f64,
    b: f64,
    tau: f64,
}

// Partials of E M2 with respect to (a, b, tau) of each class.
#[derive(Default, Clone, Copy)]
struct EnvelopePartials {
    a: [f64; 2],
    b: [f64; 2],
    tau: [f64; 2],
}

impl<'a> Objective<'a> {
    pub fn new(dist: &'a JointSpectrumDistribution, params: &'a SolverParams) -> Result<Self> {
        params.validate()?;
        let rule = match params.expectation {
            Expectation::Exact => None,
            Expectation::Quadrature => Some((
                NormalRule::new(params.quadrature_nodes)?,
                PiecewiseNormalRule::new(params.quadrature_nodes)?,
            )),
        };
        Ok(Self {
            dist,
            params,
            zeta_sq: [dist.zeta_sq(Class::Pos), dist.zeta_sq(Class::Neg)],
            rule,
        })
    }

    pub fn zeta_sq(&self, class: Class) -> f64 {
        self.zeta_sq[class.index()]
    }

    pub fn value(&self, z: &[f64; NUM_VARS]) -> f64 {
        self.evaluate(z, false).0
    }

    pub fn value_and_gradient(&self, z: &[f64; NUM_VARS]) -> (f64, [f64; NUM_VARS]) {
        self.evaluate(z, true)
    }

    fn prior(&self, class: Class) -> f64 {
        match class {
            Class::Pos => self.params.prior_pos,
            Class::Neg => 1.0 - self.params.prior_pos,
        }
    }

    fn evaluate(&self, z: &[f64; NUM_VARS], want_grad: bool) -> (f64, [f64; NUM_VARS]) {
        let delta = self.params.delta;
        let r = self.params.ridge;
        let mut grad = [0.0; NUM_VARS];
        let mut total = 0.0;

        // r E M2 over atoms and (H+, H-).
        for atom in self.dist.atoms() {
            let mut args = [EnvelopeArgs { a: 0.0, b: 0.0, tau: 1.0 }; 2];
            for class in Class::BOTH {
                let k = class.index();
                let v = &z[6 * k..6 * k + 6];
                let l = atom.eigenvalue(class);
                args[k] = EnvelopeArgs {
                    a: v[ALPHA] * v[BETA] / (v[GAMMA] * (delta * l).sqrt()),
                    b: v[ETA] * v[ALPHA] * atom.t / (v[GAMMA] * self.zeta_sq[k] * l),
                    tau: v[ALPHA] * r / (v[GAMMA] * l),
                };
            }
            let (m2, partials) = match &self.rule {
                None => square_envelope_exact(&args),
                Some((rule, _)) => square_envelope_quadrature(rule, &args),
            };
            let weight = r * atom.prob;
            total += weight * m2;
            if want_grad {
                for class in Class::BOTH {
                    let k = class.index();
                    let v = &z[6 * k..6 * k + 6];
                    let l = atom.eigenvalue(class);
                    let arg = args[k];
                    let (ga, gb, gt) = (
                        weight * partials.a[k],
                        weight * partials.b[k],
                        weight * partials.tau[k],
                    );
                    let sqdl = (delta * l).sqrt();
                    let b_per_eta = v[ALPHA] * atom.t / (v[GAMMA] * self.zeta_sq[k] * l);
                    let g = &mut grad[6 * k..6 * k + 6];
                    g[ALPHA] += ga * v[BETA] / (v[GAMMA] * sqdl)
                        + gb * v[ETA] * atom.t / (v[GAMMA] * self.zeta_sq[k] * l)
                        + gt * r / (v[GAMMA] * l);
                    g[BETA] += ga * v[ALPHA] / (v[GAMMA] * sqdl);
                    g[GAMMA] -= (ga * arg.a + gb * arg.b + gt * arg.tau) / v[GAMMA];
                    g[ETA] += gb * b_per_eta;
                }
            }
        }

        for class in Class::BOTH {
            let k = class.index();
            let v = &z[6 * k..6 * k + 6];
            let (mu, alpha, tau, beta, gamma, eta) =
                (v[MU], v[ALPHA], v[TAU], v[BETA], v[GAMMA], v[ETA]);
            let zs = self.zeta_sq[k];
            let pi = self.prior(class);

            let mean = mu * zs;
            let std = (mu * mu * zs + alpha * alpha).sqrt();
            let tau_eff = tau / beta;
            let mom = match &self.rule {
                None => self
                    .params
                    .loss
                    .envelope_moments_exact(mean, std, tau_eff)
                    .expect("loss without closed-form moments"),
                Some((_, rule)) => self
                    .params
                    .loss
                    .envelope_moments_piecewise(rule, mean, std, tau_eff),
            };
            total += pi * mom.value;
            total += -eta * eta * alpha / (2.0 * gamma * zs)
                - mu * mu * gamma * zs / (2.0 * alpha)
                - alpha * beta * beta / (2.0 * delta * gamma)
                + beta * tau / 2.0
                - alpha * gamma / 2.0
                + eta * mu;

            if want_grad {
                let g = &mut grad[6 * k..6 * k + 6];
                let ds_dmu = if std > 0.0 { mu * zs / std } else { 0.0 };
                let ds_dalpha = if std > 0.0 { alpha / std } else { 1.0 };
                g[MU] += pi * (mom.d_mean * zs + mom.d_std * ds_dmu) - mu * gamma * zs / alpha + eta;
                g[ALPHA] += pi * mom.d_std * ds_dalpha - eta * eta / (2.0 * gamma * zs)
                    + mu * mu * gamma * zs / (2.0 * alpha * alpha)
                    - beta * beta / (2.0 * delta * gamma)
                    - gamma / 2.0;
                g[TAU] += pi * mom.d_tau / beta + beta / 2.0;
                g[BETA] += -pi * mom.d_tau * tau / (beta * beta) - alpha * beta / (delta * gamma)
                    + tau / 2.0;
                g[GAMMA] += eta * eta * alpha / (2.0 * gamma * gamma * zs)
                    - mu * mu * zs / (2.0 * alpha)
                    + alpha * beta * beta / (2.0 * delta * gamma * gamma)
                    - alpha / 2.0;
                g[ETA] += -eta * alpha / (gamma * zs) + mu;
            }
        }
        (total, grad)
    }
}

// With w = 1 / (2 tau) and x_y = a_y H_y + b_y the envelope equals
// w+ x+^2 + w- x-^2 - (w+ x+ + w- x-)^2 / (1 + w+ + w-), so its mean only
// involves E x_y^2 = a_y^2 + b_y^2 and E x+ x- = b+ b-.
fn square_envelope_exact(args: &[EnvelopeArgs; 2]) -> (f64, EnvelopePartials) {
    let w = [0.5 / args[0].tau, 0.5 / args[1].tau];
    let e = [
        args[0].a * args[0].a + args[0].b * args[0].b,
        args[1].a * args[1].a + args[1].b * args[1].b,
    ];
    let s = 1.0 + w[0] + w[1];
    let cross = args[0].b * args[1].b;
    let num = w[0] * w[0] * e[0] + w[1] * w[1] * e[1] + 2.0 * w[0] * w[1] * cross;
    let value = w[0] * e[0] + w[1] * e[1] - num / s;

    let mut p = EnvelopePartials::default();
    for k in 0..2 {
        let o = 1 - k;
        p.a[k] = 2.0 * args[k].a * w[k] * (1.0 - w[k] / s);
        p.b[k] = 2.0 * w[k] * (args[k].b - (w[k] * args[k].b + w[o] * args[o].b) / s);
        let d_w = e[k] - (2.0 * w[k] * e[k] + 2.0 * w[o] * cross) / s + num / (s * s);
        p.tau[k] = -2.0 * w[k] * w[k] * d_w;
    }
    (value, p)
}

fn square_envelope_quadrature(rule: &NormalRule, args: &[EnvelopeArgs; 2]) -> (f64, EnvelopePartials) {
    let mut value = 0.0;
    let mut p = EnvelopePartials::default();
    for (h0, w0) in rule.iter() {
        for (h1, w1) in rule.iter() {
            let w = w0 * w1;
            let x = [args[0].a * h0 + args[0].b, args[1].a * h1 + args[1].b];
            let v = prox2_square(x[0], x[1], args[0].tau, args[1].tau);
            value += w
                * (v * v
                    + (x[0] - v).powi(2) / (2.0 * args[0].tau)
                    + (x[1] - v).powi(2) / (2.0 * args[1].tau));
            let h = [h0, h1];
            for k in 0..2 {
                let dx = (x[k] - v) / args[k].tau;
                p.a[k] += w * dx * h[k];
                p.b[k] += w * dx;
                p.tau[k] -= w * (x[k] - v).powi(2) / (2.0 * args[k].tau * args[k].tau);
            }
        }
    }
    (value, p)
}

/// Objective value at `vars`; errors when a floored variable is below its floor.
pub fn objective(
    vars: &SaddlePoint,
    dist: &JointSpectrumDistribution,
    params: &SolverParams,
) -> Result<f64> {
    let z = vars.to_vars();
    for (i, &x) in z.iter().enumerate() {
        if !x.is_finite() {
            return invalid(format!("variable {i} is not finite"));
        }
        if is_floored(i) && x < FLOOR {
            return invalid(format!("variable {i} = {x} is below the floor {FLOOR}"));
        }
    }
    Ok(Objective::new(dist, params)?.value(&z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{setting_a, setting_b, setting_c};
    use rand::{Rng, SeedableRng};

    fn random_point(rng: &mut impl Rng) -> [f64; NUM_VARS] {
        let mut z = [0.0; NUM_VARS];
        for (i, x) in z.iter_mut().enumerate() {
            *x = if is_floored(i) {
                rng.random_range(0.2..2.0)
            } else {
                rng.random_range(-1.0..1.0)
            };
        }
        z
    }

    fn dists() -> Vec<JointSpectrumDistribution> {
        vec![
            setting_a(2.0).unwrap(),
            setting_b(0.3).unwrap(),
            setting_c(3.0).unwrap(),
        ]
    }

    fn check_gradients(expectation: Expectation, points: usize) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let dists = dists();
        for i in 0..points {
            let dist = &dists[i % dists.len()];
            let params = SolverParams {
                expectation,
                prior_pos: rng.random_range(0.2..0.8),
                ..Default::default()
            };
            let obj = Objective::new(dist, &params).unwrap();
            let z = random_point(&mut rng);
            let (_, g) = obj.value_and_gradient(&z);
            let h = 1e-6;
            let mut err = 0.0;
            let mut scale = 0.0;
            for k in 0..NUM_VARS {
                let (mut up, mut down) = (z, z);
                up[k] += h;
                down[k] -= h;
                let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
                err += (g[k] - fd).powi(2);
                scale += fd * fd;
            }
            let rel = (err / scale).sqrt();
            assert!(rel < 1e-4, "point {i}: relative gradient error {rel}");
        }
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        check_gradients(Expectation::Exact, 100);
    }

    #[test]
    fn quadrature_gradient_matches_finite_differences() {
        check_gradients(Expectation::Quadrature, 12);
    }

    #[test]
    fn quadrature_agrees_with_closed_forms() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let quad = SolverParams { expectation: Expectation::Quadrature, quadrature_nodes: 32, ..Default::default() };
        let exact = SolverParams::default();
        for dist in dists() {
            let z = random_point(&mut rng);
            let (a, ga) = Objective::new(&dist, &exact).unwrap().value_and_gradient(&z);
            let (b, gb) = Objective::new(&dist, &quad).unwrap().value_and_gradient(&z);
            assert!((a - b).abs() < 1e-11);
            for k in 0..NUM_VARS {
                assert!((ga[k] - gb[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn relabeling_symmetry() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for dist in dists() {
            let params = SolverParams { prior_pos: 0.35, ..Default::default() };
            let flipped = SolverParams { prior_pos: 0.65, ..Default::default() };
            let sp = SaddlePoint::from_vars(&random_point(&mut rng));
            let a = objective(&sp, &dist, &params).unwrap();
            let b = objective(&sp.swapped(), &dist.swapped(), &flipped).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn floor_violations_rejected() {
        let dist = setting_a(1.0).unwrap();
        let mut sp = SaddlePoint::initial();
        sp.neg.gamma = 0.0;
        assert!(objective(&sp, &dist, &SolverParams::default()).is_err());
        sp.neg.gamma = FLOOR;
        assert!(objective(&sp, &dist, &SolverParams::default()).is_ok());
    }
}
