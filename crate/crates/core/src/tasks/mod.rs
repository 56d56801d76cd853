//! Upstream task families and downstream tasks.
//!
//! An upstream task is an expected-risk function `θ ↦ E[ℓ_t(θ, z)]` with an
//! analytic gradient, an optional stochastic sampler, and the regularity
//! constants (μ, L, L′, B) certified on the family's domain ball. A downstream
//! task is a convex combination `Σ λ_t ℓ_t` with `λ` in the probability
//! simplex.
//!
//! Task indices are zero-based throughout.

mod quadratic;

use std::fmt;
use std::sync::Arc;

use rand::RngCore;

use crate::error::{invalid, Error, Result};
use crate::linalg;

pub use quadratic::{
    gap_family, gap_family_with, quadratic_family, quadratic_family_with, FamilyOptions,
    Quadratic,
};

/// Absolute tolerance used to decide which tasks attain the worst-case risk.
pub const ARGMAX_TIE_TOL: f64 = 1e-12;

/// Tolerance on `Σ λ_t = 1` for simplex points.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// A model parameter `θ ∈ R^d`. Entries are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if !linalg::all_finite(&coords) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// One-dimensional parameter.
    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.0)
    }

    pub fn dist_sq(&self, other: &ParamVector) -> f64 {
        linalg::dist_sq(&self.0, &other.0)
    }

    pub fn dist(&self, other: &ParamVector) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(linalg::all_finite(&coords));
        Self(coords)
    }
}

impl fmt::Display for ParamVector {
    /// Coordinates joined by `;` so the value can sit inside a CSV field.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            f.write_str(&crate::report::fmt_float(*x))?;
        }
        Ok(())
    }
}

/// A downstream task index: a point of the probability simplex `Δ_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("simplex point must have at least one entry"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("simplex weights must be finite and nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(invalid(format!("simplex weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(invalid("simplex point must have at least one entry"));
        }
        Ok(Self(vec![1.0 / len as f64; len]))
    }

    /// The vertex `e_t`.
    pub fn vertex(len: usize, t: usize) -> Result<Self> {
        if t >= len {
            return Err(invalid(format!("vertex {t} out of range for {len} tasks")));
        }
        let mut w = vec![0.0; len];
        w[t] = 1.0;
        Ok(Self(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }
}

/// Expected-risk model behind a [`Task`].
///
/// Implementations work on raw slices; dimension checks happen in [`Task`] and
/// [`TaskFamily`].
pub trait RiskModel: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn expected_risk(&self, theta: &[f64]) -> f64;

    fn gradient(&self, theta: &[f64]) -> Vec<f64>;

    /// Draws one data point `z`, or `None` when the model has no sampler.
    fn draw(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>>;

    /// Per-sample loss `ℓ(θ, z)`; unbiased for `expected_risk` under `draw`.
    fn sample_loss(&self, theta: &[f64], z: &[f64]) -> f64;

    fn sample_gradient(&self, theta: &[f64], z: &[f64]) -> Vec<f64>;

    fn has_sampler(&self) -> bool {
        true
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }
}

/// Per-sample importance weight applied in minibatch estimates.
pub type DataWeight = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Regularity constants of a task on its family's domain ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskConstants {
    /// Strong-convexity modulus μ.
    pub mu: f64,
    /// Smoothness L.
    pub smoothness: f64,
    /// Lipschitz constant L′.
    pub lipschitz: f64,
    /// Loss bound B.
    pub bound: f64,
}

#[derive(Clone)]
pub struct Task {
    model: Arc<dyn RiskModel>,
    constants: TaskConstants,
    data_weight: Option<DataWeight>,
}

impl fmt::Debug for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Task")
            .field("model", &self.model)
            .field("constants", &self.constants)
            .field("data_weight", &self.data_weight.is_some())
            .finish()
    }
}

impl Task {
    pub fn new(model: Arc<dyn RiskModel>, constants: TaskConstants) -> Result<Self> {
        let TaskConstants {
            mu,
            smoothness,
            lipschitz,
            bound,
        } = constants;
        for (name, v) in [
            ("mu", mu),
            ("smoothness", smoothness),
            ("lipschitz", lipschitz),
            ("bound", bound),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("task constant {name} must be positive, got {v}")));
            }
        }
        if mu > smoothness {
            return Err(invalid(format!(
                "strong convexity {mu} exceeds smoothness {smoothness}"
            )));
        }
        Ok(Self {
            model,
            constants,
            data_weight: None,
        })
    }

    pub fn with_data_weight(mut self, weight: DataWeight) -> Self {
        self.data_weight = Some(weight);
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn constants(&self) -> TaskConstants {
        self.constants
    }

    pub fn model(&self) -> &dyn RiskModel {
        self.model.as_ref()
    }

    pub fn as_quadratic(&self) -> Option<&Quadratic> {
        self.model.as_quadratic()
    }

    pub fn has_sampler(&self) -> bool {
        self.model.has_sampler()
    }

    fn check(&self, theta: &ParamVector) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: theta.dim(),
            });
        }
        Ok(())
    }

    pub fn expected_risk(&self, theta: &ParamVector) -> Result<f64> {
        self.check(theta)?;
        Ok(self.model.expected_risk(theta.as_slice()))
    }

    pub fn gradient(&self, theta: &ParamVector) -> Result<ParamVector> {
        self.check(theta)?;
        ParamVector::new(self.model.gradient(theta.as_slice()))
    }

    /// One stochastic `(loss, gradient)` pair at `theta`.
    pub fn sample(&self, rng: &mut dyn RngCore, theta: &ParamVector) -> Result<(f64, ParamVector)> {
        self.check(theta)?;
        let z = self.model.draw(rng).ok_or(Error::MissingSampler(0))?;
        let th = theta.as_slice();
        Ok((
            self.model.sample_loss(th, &z),
            ParamVector::new(self.model.sample_gradient(th, &z))?,
        ))
    }

    /// Minibatch estimates of the risk and its gradient from a single batch of
    /// `batch` draws. With a data weight the estimate is the self-normalised
    /// weighted mean.
    pub(crate) fn minibatch_raw(
        &self,
        rng: &mut dyn RngCore,
        theta: &[f64],
        batch: usize,
    ) -> Option<(f64, Vec<f64>)> {
        let mut loss = 0.0;
        let mut grad = vec![0.0; theta.len()];
        let mut total_weight = 0.0;
        for _ in 0..batch {
            let z = self.model.draw(rng)?;
            let w = self.data_weight.as_ref().map_or(1.0, |f| f(&z));
            loss += w * self.model.sample_loss(theta, &z);
            linalg::axpy(w, &self.model.sample_gradient(theta, &z), &mut grad);
            total_weight += w;
        }
        if total_weight <= 0.0 {
            return Some((0.0, grad));
        }
        grad.iter_mut().for_each(|g| *g /= total_weight);
        Some((loss / total_weight, grad))
    }

    pub fn minibatch(
        &self,
        rng: &mut dyn RngCore,
        theta: &ParamVector,
        batch: usize,
    ) -> Result<(f64, ParamVector)> {
        self.check(theta)?;
        if batch == 0 {
            return Err(invalid("batch size must be positive"));
        }
        let (loss, grad) = self
            .minibatch_raw(rng, theta.as_slice(), batch)
            .ok_or(Error::MissingSampler(0))?;
        Ok((loss, ParamVector::new(grad)?))
    }
}

/// Result of [`TaskFamily::worst_case_risk`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub value: f64,
    /// Every task within [`ARGMAX_TIE_TOL`] of the maximum, ascending.
    pub argmax: Vec<usize>,
}

/// `T ≥ 1` upstream tasks sharing a parameter dimension and a domain ball
/// (centred at the origin) on which the constants are certified.
#[derive(Debug, Clone)]
pub struct TaskFamily {
    name: String,
    tasks: Vec<Task>,
    dim: usize,
    domain_radius: f64,
}

impl TaskFamily {
    pub fn new(name: impl Into<String>, tasks: Vec<Task>, domain_radius: f64) -> Result<Self> {
        let dim = tasks
            .first()
            .map(Task::dim)
            .ok_or_else(|| invalid("a task family needs at least one task"))?;
        if let Some(bad) = tasks.iter().find(|t| t.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        if !(domain_radius.is_finite() && domain_radius > 0.0) {
            return Err(invalid(format!("domain radius must be positive, got {domain_radius}")));
        }
        Ok(Self {
            name: name.into(),
            tasks,
            dim,
            domain_radius,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of upstream tasks `T`.
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, t: usize) -> &Task {
        &self.tasks[t]
    }

    /// Attaches a data-weighting function to task `t`.
    pub fn with_data_weight(mut self, t: usize, weight: DataWeight) -> Result<Self> {
        let task = self
            .tasks
            .get_mut(t)
            .ok_or_else(|| invalid(format!("task {t} out of range")))?;
        task.data_weight = Some(weight);
        Ok(self)
    }

    /// Family strong convexity: the minimum over tasks.
    pub fn mu(&self) -> f64 {
        self.fold_constant(f64::INFINITY, f64::min, |c| c.mu)
    }

    pub fn smoothness(&self) -> f64 {
        self.fold_constant(0.0, f64::max, |c| c.smoothness)
    }

    pub fn lipschitz(&self) -> f64 {
        self.fold_constant(0.0, f64::max, |c| c.lipschitz)
    }

    pub fn bound(&self) -> f64 {
        self.fold_constant(0.0, f64::max, |c| c.bound)
    }

    fn fold_constant(
        &self,
        init: f64,
        op: fn(f64, f64) -> f64,
        pick: fn(&TaskConstants) -> f64,
    ) -> f64 {
        self.tasks.iter().map(|t| pick(&t.constants)).fold(init, op)
    }

    pub fn is_quadratic(&self) -> bool {
        self.tasks.iter().all(|t| t.as_quadratic().is_some())
    }

    pub fn check_theta(&self, theta: &ParamVector) -> Result<()> {
        if theta.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: theta.dim(),
            });
        }
        Ok(())
    }

    pub fn check_lambda(&self, lambda: &SimplexPoint) -> Result<()> {
        if lambda.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: lambda.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn risks_raw(&self, theta: &[f64]) -> Vec<f64> {
        self.tasks
            .iter()
            .map(|t| t.model.expected_risk(theta))
            .collect()
    }

    pub(crate) fn gradients_raw(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        self.tasks.iter().map(|t| t.model.gradient(theta)).collect()
    }

    /// Per-task expected risks at `theta`.
    pub fn risks(&self, theta: &ParamVector) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok(self.risks_raw(theta.as_slice()))
    }

    /// `max_t E[ℓ_t(θ)]` and the set of maximising tasks. By linearity this is
    /// also the maximum of the downstream risk over the whole simplex.
    pub fn worst_case_risk(&self, theta: &ParamVector) -> Result<WorstCase> {
        self.check_theta(theta)?;
        Ok(worst_case_of(&self.risks_raw(theta.as_slice())))
    }

    pub(crate) fn worst_value_raw(&self, theta: &[f64]) -> f64 {
        self.tasks
            .iter()
            .map(|t| t.model.expected_risk(theta))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Σ_t λ_t E[ℓ_t(θ)]`.
    pub fn downstream_risk(&self, lambda: &SimplexPoint, theta: &ParamVector) -> Result<f64> {
        self.check_lambda(lambda)?;
        self.check_theta(theta)?;
        Ok(self.downstream_risk_raw(lambda.weights(), theta.as_slice()))
    }

    /// `Σ_t λ_t ∇E[ℓ_t(θ)]`.
    pub fn downstream_gradient(
        &self,
        lambda: &SimplexPoint,
        theta: &ParamVector,
    ) -> Result<ParamVector> {
        self.check_lambda(lambda)?;
        self.check_theta(theta)?;
        ParamVector::new(self.downstream_gradient_raw(lambda.weights(), theta.as_slice()))
    }

    pub(crate) fn downstream_risk_raw(&self, lambda: &[f64], theta: &[f64]) -> f64 {
        self.tasks
            .iter()
            .zip(lambda)
            .filter(|(_, &l)| l != 0.0)
            .map(|(t, &l)| l * t.model.expected_risk(theta))
            .sum()
    }

    pub(crate) fn downstream_gradient_raw(&self, lambda: &[f64], theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for (t, &l) in self.tasks.iter().zip(lambda) {
            if l != 0.0 {
                linalg::axpy(l, &t.model.gradient(theta), &mut g);
            }
        }
        g
    }

    /// Strong convexity of the downstream loss `Σ λ_t ℓ_t`, bounded below by
    /// `Σ λ_t μ_t`.
    pub fn downstream_mu(&self, lambda: &SimplexPoint) -> f64 {
        self.combine_constant(lambda, |c| c.mu)
    }

    pub fn downstream_smoothness(&self, lambda: &SimplexPoint) -> f64 {
        self.combine_constant(lambda, |c| c.smoothness)
    }

    fn combine_constant(&self, lambda: &SimplexPoint, pick: fn(&TaskConstants) -> f64) -> f64 {
        self.tasks
            .iter()
            .zip(lambda.weights())
            .map(|(t, l)| l * pick(&t.constants))
            .sum()
    }
}

pub(crate) fn worst_case_of(risks: &[f64]) -> WorstCase {
    let value = risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let argmax = risks
        .iter()
        .enumerate()
        .filter(|(_, &r)| value - r <= ARGMAX_TIE_TOL)
        .map(|(i, _)| i)
        .collect();
    WorstCase { value, argmax }
}
