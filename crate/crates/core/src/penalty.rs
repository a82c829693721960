//! SCAD penalty derivative and its MM (perturbed quadratic) surrogate.

use crate::error::{Error, Result};

pub const DEFAULT_SCAD_A: f64 = 3.7;
pub const DEFAULT_MM_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScadParams {
    pub a: f64,
    pub lambda: f64,
}

impl ScadParams {
    pub fn new(a: f64, lambda: f64) -> Result<Self> {
        if !(a > 2.0) {
            return Err(Error::InvalidInput(format!("SCAD parameter a = {a} must exceed 2")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda = {lambda} must be >= 0")));
        }
        Ok(Self { a, lambda })
    }

    pub fn with_lambda(lambda: f64) -> Result<Self> {
        Self::new(DEFAULT_SCAD_A, lambda)
    }
}

/// `q_λ(|θ|)`: λ below λ, then `(aλ - |θ|)_+ / (a - 1)`.
pub fn scad_derivative(params: ScadParams, abs_theta: f64) -> f64 {
    let ScadParams { a, lambda } = params;
    if lambda == 0.0 {
        return 0.0;
    }
    if abs_theta < lambda {
        lambda
    } else {
        (a * lambda - abs_theta).max(0.0) / (a - 1.0)
    }
}

/// `p_λ(|θ|)`, the SCAD penalty whose derivative is [`scad_derivative`].
pub fn scad_penalty(params: ScadParams, abs_theta: f64) -> f64 {
    let ScadParams { a, lambda } = params;
    let t = abs_theta;
    if t <= lambda {
        lambda * t
    } else if t <= a * lambda {
        (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
    } else {
        lambda * lambda * (a + 1.0) / 2.0
    }
}

/// Surrogate terms at one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmWeight {
    /// `q_λ(|θ|) |θ| / (ε + |θ|)`, the smoothed penalty-derivative magnitude.
    pub penalty_value: f64,
    /// `q_λ(|θ|) / (ε + |θ|)`, the diagonal ridge entry of the surrogate.
    pub ridge_coefficient: f64,
}

pub fn mm_weight(params: ScadParams, abs_theta: f64, epsilon: f64) -> MmWeight {
    let q = scad_derivative(params, abs_theta);
    let ridge = q / (epsilon + abs_theta);
    MmWeight {
        penalty_value: ridge * abs_theta,
        ridge_coefficient: ridge,
    }
}
