//! Softmax weighted gradient descent and the comparison optimizers.
//!
//! Every run produces a [`RunTrace`]. Iteration `k` evaluates the risks and
//! gradients at `θ_k`, forms weights with the schedule's `α_k`, and steps to
//! `θ_{k+1}`; `K` iterations therefore visit `θ_0..θ_{K−1}` and take `K − 1`
//! steps. The averaged iterate is the arithmetic mean of those `K` points.

mod trace;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::tasks::{ParamVector, SimplexPoint, TaskFamily};
use crate::weighting::{
    baseline_weights, softmax_weights, AlphaSchedule, Balancer, BaselineMethod, BaselineState,
    WeightVector,
};

pub use trace::{IterationRecord, RunTrace};

/// Runs abort once `‖θ‖` exceeds this multiple of the family's domain radius.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Constant(f64),
    /// `η = R₀/(L′√K)` for every step.
    Theoretical { r0: f64, lipschitz: f64 },
}

/// Step sizes, softmax hyperparameters and iteration budget of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    step: StepMode,
    eta: f64,
    alpha: AlphaSchedule,
    iterations: usize,
    record_every: usize,
}

impl Schedule {
    pub fn new(step: StepMode, alpha: AlphaSchedule, iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(invalid("iteration count K must be at least 1"));
        }
        let eta = match step {
            StepMode::Constant(eta) => eta,
            StepMode::Theoretical { r0, lipschitz } => {
                if !(r0 > 0.0 && lipschitz > 0.0) {
                    return Err(invalid("theoretical step needs R0 > 0 and L' > 0"));
                }
                r0 / (lipschitz * (iterations as f64).sqrt())
            }
        };
        if !(eta.is_finite() && eta > 0.0) {
            return Err(invalid(format!("step size must be positive, got {eta}")));
        }
        Ok(Self {
            step,
            eta,
            alpha,
            iterations,
            record_every: 1,
        })
    }

    pub fn constant(eta: f64, alpha: f64, iterations: usize) -> Result<Self> {
        Self::new(StepMode::Constant(eta), AlphaSchedule::constant(alpha)?, iterations)
    }

    /// Step size `R₀/(L′√K)` with the increasing α schedule.
    pub fn theoretical(
        r0: f64,
        lipschitz: f64,
        tasks: usize,
        bound: f64,
        iterations: usize,
    ) -> Result<Self> {
        Self::new(
            StepMode::Theoretical { r0, lipschitz },
            AlphaSchedule::theoretical(r0, lipschitz, tasks, bound)?,
            iterations,
        )
    }

    /// Keep only every `stride`-th record (plus the last). The averaged
    /// iterate is unaffected.
    pub fn with_record_every(mut self, stride: usize) -> Self {
        self.record_every = stride.max(1);
        self
    }

    pub fn step_mode(&self) -> StepMode {
        self.step
    }

    pub fn step_size(&self) -> f64 {
        self.eta
    }

    pub fn alpha(&self) -> &AlphaSchedule {
        &self.alpha
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn record_every(&self) -> usize {
        self.record_every
    }
}

/// Minibatch settings for the stochastic path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stochastic {
    pub batch_size: usize,
    pub seed: u64,
}

/// Objective for single-loss descent runs.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;
}

/// The downstream loss `Σ λ_t E[ℓ_t]` of a family.
#[derive(Debug, Clone, Copy)]
pub struct Downstream<'a> {
    family: &'a TaskFamily,
    lambda: &'a SimplexPoint,
}

impl<'a> Downstream<'a> {
    pub fn new(family: &'a TaskFamily, lambda: &'a SimplexPoint) -> Result<Self> {
        family.check_lambda(lambda)?;
        Ok(Self { family, lambda })
    }
}

impl Objective for Downstream<'_> {
    fn dim(&self) -> usize {
        self.family.dim()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        self.family.downstream_risk_raw(self.lambda.weights(), theta)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.family.downstream_gradient_raw(self.lambda.weights(), theta)
    }
}

/// Objective from a pair of closures.
pub struct FnObjective<F, G> {
    dim: usize,
    value: F,
    gradient: G,
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(dim: usize, value: F, gradient: G) -> Self {
        Self {
            dim,
            value,
            gradient,
        }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &[f64]) -> f64 {
        (self.value)(theta)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        (self.gradient)(theta)
    }
}

/// Closed Euclidean ball used as a projection set.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: ParamVector,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: ParamVector, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(invalid(format!("ball radius must be nonnegative, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// Membership with a relative slack of a few ulps.
    pub fn contains(&self, theta: &[f64]) -> bool {
        linalg::dist_sq(theta, self.center.as_slice()).sqrt()
            <= self.radius * (1.0 + 1e-12) + 1e-300
    }

    pub fn project(&self, theta: &mut [f64]) {
        linalg::project_ball(theta, self.center.as_slice(), self.radius);
    }
}

/// Softmax weighted gradient descent.
///
/// The deterministic path uses exact risks and gradients. With `stochastic`
/// set, each iteration draws one minibatch per task and uses it for both the
/// weights and the gradient.
pub fn swgd_run(
    family: &TaskFamily,
    theta0: &ParamVector,
    schedule: &Schedule,
    stochastic: Option<Stochastic>,
) -> Result<RunTrace> {
    let alpha = *schedule.alpha();
    run_weighted(family, theta0, schedule, stochastic, |k, risks, _| {
        softmax_weights(risks, alpha.alpha(k))
    })
}

/// Gradient descent on the average risk `(1/T) Σ_t E[ℓ_t]`.
pub fn average_gd_run(
    family: &TaskFamily,
    theta0: &ParamVector,
    eta: f64,
    iterations: usize,
) -> Result<RunTrace> {
    let schedule = Schedule::new(StepMode::Constant(eta), AlphaSchedule::Constant(0.0), iterations)?;
    let tasks = family.len();
    run_weighted(family, theta0, &schedule, None, |_, _, _| {
        Ok(WeightVector::uniform(tasks))
    })
}

/// Descent with weights from a baseline balancing rule.
pub fn balanced_run(
    family: &TaskFamily,
    theta0: &ParamVector,
    method: BaselineMethod,
    eta: f64,
    iterations: usize,
) -> Result<RunTrace> {
    let schedule = Schedule::new(StepMode::Constant(eta), AlphaSchedule::Constant(0.0), iterations)?;
    balanced_run_with(family, theta0, method, &schedule, None)
}

fn balanced_run_with(
    family: &TaskFamily,
    theta0: &ParamVector,
    method: BaselineMethod,
    schedule: &Schedule,
    stochastic: Option<Stochastic>,
) -> Result<RunTrace> {
    let mut state = BaselineState::new(method, family.len());
    run_weighted(family, theta0, schedule, stochastic, |_, risks, grads| {
        baseline_weights(&mut state, risks, grads)
    })
}

/// Runs any [`Balancer`] under `schedule`. Baselines ignore the α schedule.
pub fn run_balancer(
    family: &TaskFamily,
    theta0: &ParamVector,
    balancer: Balancer,
    schedule: &Schedule,
    stochastic: Option<Stochastic>,
) -> Result<RunTrace> {
    match balancer {
        Balancer::Minimax => swgd_run(family, theta0, schedule, stochastic),
        Balancer::Baseline(method) => {
            balanced_run_with(family, theta0, method, schedule, stochastic)
        }
    }
}

fn run_weighted<F>(
    family: &TaskFamily,
    theta0: &ParamVector,
    schedule: &Schedule,
    stochastic: Option<Stochastic>,
    mut rule: F,
) -> Result<RunTrace>
where
    F: FnMut(usize, &[f64], &[Vec<f64>]) -> Result<WeightVector>,
{
    family.check_theta(theta0)?;
    if let Some(s) = stochastic {
        if s.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if let Some(t) = family.tasks().iter().position(|t| !t.has_sampler()) {
            return Err(Error::MissingSampler(t));
        }
    }
    let started = Instant::now();
    let iterations = schedule.iterations();
    let stride = schedule.record_every();
    let eta = schedule.step_size();
    let limit = DIVERGENCE_FACTOR * family.domain_radius();
    let mut rng = stochastic.map(|s| ChaCha8Rng::seed_from_u64(s.seed));

    let mut theta = theta0.as_slice().to_vec();
    let mut sum = vec![0.0; theta.len()];
    let mut trace = RunTrace::new(family.len(), iterations, stochastic.map(|s| s.seed), eta);

    for k in 0..iterations {
        let risks = family.risks_raw(&theta);
        let (est_risks, grads) = match (&mut rng, stochastic) {
            (Some(rng), Some(s)) => {
                let mut est = Vec::with_capacity(family.len());
                let mut grads = Vec::with_capacity(family.len());
                for task in family.tasks() {
                    let (l, g) = task
                        .minibatch_raw(rng, &theta, s.batch_size)
                        .expect("samplers checked above");
                    est.push(l);
                    grads.push(g);
                }
                (est, grads)
            }
            _ => (risks.clone(), family.gradients_raw(&theta)),
        };
        let weights = rule(k, &est_risks, &grads)?;
        let mut direction = vec![0.0; theta.len()];
        for (w, g) in weights.as_slice().iter().zip(&grads) {
            linalg::axpy(*w, g, &mut direction);
        }
        let grad_norm = linalg::norm(&direction);

        if k % stride == 0 || k + 1 == iterations {
            trace.push(IterationRecord::new(k, ParamVector::from_raw(theta.clone()), risks, weights, grad_norm));
        }
        linalg::axpy(1.0, &theta, &mut sum);

        if k + 1 < iterations {
            linalg::axpy(-eta, &direction, &mut theta);
            let norm = linalg::norm(&theta);
            if !norm.is_finite() || norm > limit {
                trace.elapsed = started.elapsed();
                return Err(Error::Diverged {
                    iteration: k + 1,
                    norm,
                    trace: Box::new(trace),
                });
            }
        }
    }

    let inv = 1.0 / iterations as f64;
    trace.finish(
        ParamVector::from_raw(sum.iter().map(|s| s * inv).collect()),
        ParamVector::from_raw(theta),
        started.elapsed(),
    );
    Ok(trace)
}

/// Plain gradient descent on a single objective.
pub fn gd_run(
    objective: &dyn Objective,
    theta0: &ParamVector,
    eta: f64,
    iterations: usize,
) -> Result<RunTrace> {
    descend(objective, theta0, eta, iterations, None)
}

/// Gradient step followed by projection onto `ball`; every iterate stays in
/// the ball.
pub fn projected_gd_run(
    objective: &dyn Objective,
    ball: &Ball,
    theta0: &ParamVector,
    eta: f64,
    iterations: usize,
) -> Result<RunTrace> {
    if ball.center.dim() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            found: ball.center.dim(),
        });
    }
    if theta0.dim() == objective.dim() && !ball.contains(theta0.as_slice()) {
        return Err(invalid("initial point lies outside the projection ball"));
    }
    descend(objective, theta0, eta, iterations, Some(ball))
}

fn descend(
    objective: &dyn Objective,
    theta0: &ParamVector,
    eta: f64,
    iterations: usize,
    ball: Option<&Ball>,
) -> Result<RunTrace> {
    if theta0.dim() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            found: theta0.dim(),
        });
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(invalid(format!("step size must be positive, got {eta}")));
    }
    if iterations == 0 {
        return Err(invalid("iteration count K must be at least 1"));
    }
    let started = Instant::now();
    let mut theta = theta0.as_slice().to_vec();
    let mut sum = vec![0.0; theta.len()];
    let mut trace = RunTrace::new(1, iterations, None, eta);
    for k in 0..iterations {
        let value = objective.value(&theta);
        let grad = objective.gradient(&theta);
        trace.push(IterationRecord::new(
            k,
            ParamVector::from_raw(theta.clone()),
            vec![value],
            WeightVector::uniform(1),
            linalg::norm(&grad),
        ));
        linalg::axpy(1.0, &theta, &mut sum);
        if k + 1 < iterations {
            linalg::axpy(-eta, &grad, &mut theta);
            if let Some(ball) = ball {
                ball.project(&mut theta);
            }
            if !linalg::all_finite(&theta) {
                trace.elapsed = started.elapsed();
                return Err(Error::Diverged {
                    iteration: k + 1,
                    norm: linalg::norm(&theta),
                    trace: Box::new(trace),
                });
            }
        }
    }
    let inv = 1.0 / iterations as f64;
    trace.finish(
        ParamVector::from_raw(sum.iter().map(|s| s * inv).collect()),
        ParamVector::from_raw(theta),
        started.elapsed(),
    );
    Ok(trace)
}
