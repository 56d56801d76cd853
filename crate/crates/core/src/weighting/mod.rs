//! Per-task weights for gradient aggregation.
//!
//! The minimax rule uses exponential (softmax) weights over the per-task risks,
//! `w_t ∝ exp(α·r_t)`, which approximate a subgradient of `max_t r_t` as `α`
//! grows. The baseline rules in [`baseline`] are the usual multi-task
//! balancing heuristics, normalised to the same simplex contract.

mod baseline;

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

pub use baseline::{baseline_weights, BaselineMethod, BaselineState, DWA_TEMPERATURE};

/// Lower clamp applied to the theoretical α schedule.
pub const ALPHA_FLOOR: f64 = 1e-3;

/// Weights on the probability simplex; entries in `[0, 1]` summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    /// Normalises nonnegative scores into weights.
    pub(crate) fn normalize(scores: Vec<f64>) -> Self {
        let total: f64 = scores.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Self::uniform(scores.len());
        }
        Self(scores.into_iter().map(|s| s / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn check_risks(risks: &[f64]) -> Result<()> {
    if risks.is_empty() {
        return Err(invalid("need at least one risk"));
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("risk vector"));
    }
    Ok(())
}

/// `w_t = exp(α r_t) / Σ exp(α r_t')`, evaluated after subtracting the largest
/// exponent so that large `α` cannot overflow. `α = 0` gives uniform weights.
pub fn softmax_weights(risks: &[f64], alpha: f64) -> Result<WeightVector> {
    check_risks(risks)?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(invalid(format!("softmax alpha must be nonnegative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(WeightVector::uniform(risks.len()));
    }
    let top = risks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = risks.iter().map(|r| (alpha * (r - top)).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(WeightVector(exps.into_iter().map(|e| e / total).collect()))
}

/// `Σ_t w_t r_t` with softmax weights at `alpha`: the smoothed surrogate of
/// `max_t r_t`. It never exceeds the max, and for
/// `α ≥ (1/ε)·ln(T·B/ε)` it is at least `max − 2ε` when `0 ≤ r ≤ B`.
pub fn softmax_surrogate_value(risks: &[f64], alpha: f64) -> Result<f64> {
    let w = softmax_weights(risks, alpha)?;
    Ok(w.as_slice().iter().zip(risks).map(|(w, r)| w * r).sum())
}

/// Smallest α for which the surrogate is within `2ε` of the max:
/// `(1/ε)·ln(T·B/ε)`, floored at 0.
pub fn surrogate_alpha(eps: f64, tasks: usize, bound: f64) -> Result<f64> {
    if !(eps > 0.0 && bound > 0.0 && tasks > 0) {
        return Err(invalid("surrogate alpha needs eps > 0, bound > 0, T >= 1"));
    }
    Ok(((tasks as f64 * bound / eps).ln() / eps).max(0.0))
}

/// `(4√(k+1)/(R₀L′))·ln(4TB√(k+1)/(R₀L′))`, clamped below at [`ALPHA_FLOOR`].
pub fn theoretical_alpha(k: usize, r0: f64, lipschitz: f64, tasks: usize, bound: f64) -> Result<f64> {
    for (name, v) in [("R0", r0), ("L'", lipschitz), ("B", bound)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("{name} must be positive, got {v}")));
        }
    }
    if tasks == 0 {
        return Err(invalid("T must be at least 1"));
    }
    let scale = 4.0 * ((k + 1) as f64).sqrt() / (r0 * lipschitz);
    let raw = scale * (tasks as f64 * bound * scale).ln();
    Ok(raw.max(ALPHA_FLOOR))
}

/// Softmax hyperparameter per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSchedule {
    Constant(f64),
    Theoretical {
        r0: f64,
        lipschitz: f64,
        tasks: usize,
        bound: f64,
    },
}

impl AlphaSchedule {
    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(invalid(format!("alpha must be nonnegative, got {alpha}")));
        }
        Ok(Self::Constant(alpha))
    }

    pub fn theoretical(r0: f64, lipschitz: f64, tasks: usize, bound: f64) -> Result<Self> {
        // validates the constants once
        theoretical_alpha(0, r0, lipschitz, tasks, bound)?;
        Ok(Self::Theoretical {
            r0,
            lipschitz,
            tasks,
            bound,
        })
    }

    pub fn alpha(&self, k: usize) -> f64 {
        match *self {
            Self::Constant(a) => a,
            Self::Theoretical {
                r0,
                lipschitz,
                tasks,
                bound,
            } => theoretical_alpha(k, r0, lipschitz, tasks, bound)
                .expect("constants validated at construction"),
        }
    }
}

/// Weighting rule selected by the `balancer` config key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Balancer {
    Minimax,
    Baseline(BaselineMethod),
}

impl Balancer {
    pub const ALL: [Balancer; 5] = [
        Balancer::Minimax,
        Balancer::Baseline(BaselineMethod::Uniform),
        Balancer::Baseline(BaselineMethod::Uncertainty),
        Balancer::Baseline(BaselineMethod::GradNormLite),
        Balancer::Baseline(BaselineMethod::Dwa),
    ];

    pub fn key(&self) -> &'static str {
        match self {
            Balancer::Minimax => "minimax",
            Balancer::Baseline(BaselineMethod::Uniform) => "none",
            Balancer::Baseline(BaselineMethod::Uncertainty) => "uncertainty",
            Balancer::Baseline(BaselineMethod::GradNormLite) => "gradnorm",
            Balancer::Baseline(BaselineMethod::Dwa) => "dwa",
        }
    }
}

impl fmt::Display for Balancer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Balancer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Balancer::ALL
            .into_iter()
            .find(|b| b.key() == s)
            .ok_or_else(|| invalid(format!("unknown balancer '{s}'")))
    }
}
