use std::collections::VecDeque;

use super::WeightVector;
use crate::error::{invalid, Result};
use crate::linalg;

/// Dynamic weight averaging temperature.
pub const DWA_TEMPERATURE: f64 = 2.0;

/// Step size for the log-variance updates of uncertainty weighting.
const UNCERTAINTY_LR: f64 = 0.05;

/// Exponent of the multiplicative GradNorm-style correction.
const GRADNORM_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineMethod {
    /// Equal weights `1/T`.
    Uniform,
    /// Learned homoscedastic uncertainty: `w_t ∝ exp(−2 s_t)` where `s_t` is a
    /// log standard deviation trained on `Σ exp(−2 s_t) r_t + s_t`.
    Uncertainty,
    /// Multiplicative correction toward equal weighted gradient norms.
    GradNormLite,
    /// Dynamic weight averaging on the ratio of the last two risks.
    Dwa,
}

/// Per-run history carried by the baseline rules.
#[derive(Debug, Clone)]
pub struct BaselineState {
    method: BaselineMethod,
    log_sigma: Vec<f64>,
    gradnorm_weights: Vec<f64>,
    history: VecDeque<Vec<f64>>,
}

impl BaselineState {
    pub fn new(method: BaselineMethod, tasks: usize) -> Self {
        Self {
            method,
            log_sigma: vec![0.0; tasks],
            gradnorm_weights: vec![1.0 / tasks as f64; tasks],
            history: VecDeque::with_capacity(2),
        }
    }

    pub fn method(&self) -> BaselineMethod {
        self.method
    }

    pub fn tasks(&self) -> usize {
        self.log_sigma.len()
    }

    /// Overrides the current GradNormLite weights (normalised on entry).
    pub fn set_gradnorm_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.tasks() || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(invalid("gradnorm weights must be positive, one per task"));
        }
        self.gradnorm_weights = WeightVector::normalize(weights.to_vec()).into_inner();
        Ok(())
    }

    /// Log standard deviations of the uncertainty rule.
    pub fn log_sigma(&self) -> &[f64] {
        &self.log_sigma
    }
}

/// Weights from a baseline rule given current risks and per-task gradients.
/// Advances the state by one iteration.
///
/// DWA returns uniform weights until two earlier risk vectors are on record.
pub fn baseline_weights(
    state: &mut BaselineState,
    risks: &[f64],
    gradients: &[Vec<f64>],
) -> Result<WeightVector> {
    let tasks = state.tasks();
    if risks.len() != tasks || gradients.len() != tasks {
        return Err(invalid(format!(
            "expected {tasks} risks and gradients, got {} and {}",
            risks.len(),
            gradients.len()
        )));
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(crate::error::Error::NonFinite("risk vector"));
    }

    let weights = match state.method {
        BaselineMethod::Uniform => WeightVector::uniform(tasks),
        BaselineMethod::Uncertainty => {
            let w = WeightVector::normalize(
                state.log_sigma.iter().map(|s| (-2.0 * s).exp()).collect(),
            );
            for (s, r) in state.log_sigma.iter_mut().zip(risks) {
                let grad = 1.0 - 2.0 * (-2.0 * *s).exp() * r;
                *s -= UNCERTAINTY_LR * grad;
            }
            w
        }
        BaselineMethod::GradNormLite => {
            let norms: Vec<f64> = gradients.iter().map(|g| linalg::norm(g)).collect();
            let weighted: Vec<f64> = state
                .gradnorm_weights
                .iter()
                .zip(&norms)
                .map(|(w, g)| w * g)
                .collect();
            let mean = weighted.iter().sum::<f64>() / tasks as f64;
            let updated = state
                .gradnorm_weights
                .iter()
                .zip(&weighted)
                .map(|(w, &wg)| {
                    if wg > 0.0 && mean > 0.0 {
                        w * (mean / wg).powf(GRADNORM_RATE)
                    } else {
                        *w
                    }
                })
                .collect();
            let w = WeightVector::normalize(updated);
            state.gradnorm_weights = w.as_slice().to_vec();
            w
        }
        BaselineMethod::Dwa => {
            let w = if state.history.len() < 2 {
                WeightVector::uniform(tasks)
            } else {
                let (older, newer) = (&state.history[0], &state.history[1]);
                let scores: Vec<f64> = newer
                    .iter()
                    .zip(older)
                    .map(|(n, o)| if *o > 0.0 { n / o } else { 1.0 } / DWA_TEMPERATURE)
                    .collect();
                let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                WeightVector::normalize(scores.iter().map(|s| (s - top).exp()).collect())
            };
            if state.history.len() == 2 {
                state.history.pop_front();
            }
            state.history.push_back(risks.to_vec());
            w
        }
    };
    Ok(weights)
}
