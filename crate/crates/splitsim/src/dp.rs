//! Gaussian-mechanism calibration, elementwise noise, and the composition
//! rule used by the server-side noise review.
//!
//! Sensitivity accounting mirrors the mechanism exactly as used here: layer
//! outputs are clamped elementwise to [0, 1] (so s = 1) and the noise is added
//! after clamping, without re-clamping, which keeps Gaussian additivity exact.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, Tensor};

/// An (ε, δ) privacy budget with the sensitivity of the released function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, sensitivity: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArg(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArg(format!("delta must be in (0,1), got {delta}")));
        }
        if !(sensitivity > 0.0) {
            return Err(Error::InvalidArg(format!(
                "sensitivity must be > 0, got {sensitivity}"
            )));
        }
        Ok(Self { epsilon, delta, sensitivity })
    }
}

/// Where noise enters the client part: the raw input, or the output of a
/// named client-side layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InjectionPoint {
    Input,
    AfterLayer(String),
}

impl std::fmt::Display for InjectionPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InjectionPoint::Input => write!(f, "Input"),
            InjectionPoint::AfterLayer(name) => write!(f, "{name}"),
        }
    }
}

/// A calibrated noise scale and the point where it is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub point: InjectionPoint,
}

impl NoiseSpec {
    /// σ = 0: no perturbation at all.
    pub fn none() -> Self {
        Self { sigma: 0.0, point: InjectionPoint::Input }
    }
}

/// Gaussian-mechanism scale: σ = sqrt(2 s² ln(1.25/δ) / ε²).
pub fn calibrate_sigma(budget: &PrivacyBudget) -> Result<f64> {
    let log_term = (1.25 / budget.delta).ln();
    if log_term <= 0.0 {
        return Err(Error::InvalidArg(format!(
            "delta {} >= 1.25 makes ln(1.25/delta) nonpositive",
            budget.delta
        )));
    }
    Ok((2.0 * budget.sensitivity * budget.sensitivity * log_term).sqrt() / budget.epsilon)
}

/// Clamps every element into [0, 1]. Idempotent.
pub fn clamp01(t: &Tensor) -> Tensor {
    t.map(|v| v.clamp(0.0, 1.0))
}

/// Adds an independent N(0, σ²) draw to every element. σ = 0 returns the
/// input unchanged and consumes no randomness.
pub fn add_gaussian(t: &Tensor, sigma: f64, rng: &mut impl Rng) -> Tensor {
    if sigma == 0.0 {
        return t.clone();
    }
    t.map(|v| {
        let z: f64 = rng.sample(StandardNormal);
        v + sigma * z
    })
}

/// Review scale σ̂ = sqrt(σⱼ² − σᵢ²), so that N(σᵢ) + N(σ̂) ~ N(σⱼ).
/// Errors when the target distribution is weaker than the current one.
pub fn compose_review_sigma(sigma_i: f64, sigma_j: f64) -> Result<f64> {
    if sigma_i < 0.0 || sigma_j < sigma_i {
        return Err(Error::InvalidArg(format!(
            "cannot review sigma {sigma_j} from sigma {sigma_i}"
        )));
    }
    Ok((sigma_j * sigma_j - sigma_i * sigma_i).sqrt())
}
