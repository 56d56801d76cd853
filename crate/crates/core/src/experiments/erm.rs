use rand::RngCore;
use rayon::prelude::*;

use super::{average_minimizer, cell_rng};
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::optimizer::Ball;
use crate::oracle::{
    minimax_reference, sample_complexity_bound, BasinSpec, ComplexityInputs,
};
use crate::report::{fmt_float, Check, Summary, Table};
use crate::tasks::{ParamVector, SimplexPoint, TaskFamily};

/// Iteration cap of the inner projected-GD solver.
pub const ERM_MAX_ITERATIONS: usize = 500;
/// Stop once the gradient mapping is this small.
pub const ERM_GRADIENT_TOL: f64 = 1e-10;
/// Vertices whose N̂ differ by at most this count as tied for the worst case.
pub const WORST_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ErmTrialResult {
    pub lambda: SimplexPoint,
    pub theta0: ParamVector,
    pub samples: usize,
    pub excess_risk: f64,
    pub success: bool,
}

/// Everything about one `(family, λ, θ₀, ε)` cell that does not depend on the
/// sample.
#[derive(Debug, Clone)]
pub struct ErmSetup {
    pub lambda: SimplexPoint,
    pub theta0: ParamVector,
    pub eps: f64,
    pub basin: BasinSpec,
    /// `1/L_λ`.
    pub step_size: f64,
    /// `E[ℓ_λ(θ*_λ)]`.
    pub optimum: f64,
}

impl ErmSetup {
    pub fn new(
        family: &TaskFamily,
        lambda: &SimplexPoint,
        theta0: &ParamVector,
        eps: f64,
    ) -> Result<Self> {
        family.check_lambda(lambda)?;
        family.check_theta(theta0)?;
        if !(eps.is_finite() && eps > 0.0) {
            return Err(invalid(format!("eps must be positive, got {eps}")));
        }
        for (t, (task, &l)) in family.tasks().iter().zip(lambda.weights()).enumerate() {
            if l > 0.0 && !task.has_sampler() {
                return Err(Error::MissingSampler(t));
            }
        }
        let basin = BasinSpec::downstream(family, lambda, theta0)?;
        if basin.radius_sq == 0.0 && theta0.dist(&basin.center) > 1e-12 {
            return Err(invalid(
                "basin radius is zero but the initial point is not the downstream minimiser",
            ));
        }
        let optimum = family.downstream_risk(lambda, &basin.center)?;
        Ok(Self {
            lambda: lambda.clone(),
            theta0: theta0.clone(),
            eps,
            basin,
            step_size: 1.0 / family.downstream_smoothness(lambda),
            optimum,
        })
    }
}

/// Draws `samples` points per task in the support of λ, minimises the
/// empirical downstream risk over the basin by projected gradient descent,
/// and scores the result against the true risk.
pub fn erm_trial(
    family: &TaskFamily,
    setup: &ErmSetup,
    samples: usize,
    rng: &mut dyn RngCore,
) -> Result<ErmTrialResult> {
    if samples == 0 {
        return Err(invalid("sample count must be positive"));
    }
    let weights = setup.lambda.weights();
    let mut data: Vec<(usize, Vec<Vec<f64>>)> = Vec::new();
    for (t, &l) in weights.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        let model = family.task(t).model();
        let draws = (0..samples)
            .map(|_| model.draw(rng).ok_or(Error::MissingSampler(t)))
            .collect::<Result<Vec<_>>>()?;
        data.push((t, draws));
    }

    let ball = Ball::new(setup.basin.center.clone(), setup.basin.radius())?;
    let scale = 1.0 / samples as f64;
    let empirical_gradient = |theta: &[f64]| {
        let mut g = vec![0.0; theta.len()];
        for (t, draws) in &data {
            let model = family.task(*t).model();
            for z in draws {
                linalg::axpy(weights[*t] * scale, &model.sample_gradient(theta, z), &mut g);
            }
        }
        g
    };

    let mut theta = setup.theta0.as_slice().to_vec();
    ball.project(&mut theta);
    for _ in 0..ERM_MAX_ITERATIONS {
        let g = empirical_gradient(&theta);
        let mut next = theta.clone();
        linalg::axpy(-setup.step_size, &g, &mut next);
        ball.project(&mut next);
        let moved = linalg::dist_sq(&next, &theta).sqrt() / setup.step_size;
        theta = next;
        if moved <= ERM_GRADIENT_TOL {
            break;
        }
    }
    let theta = ParamVector::new(theta)?;
    let excess_risk = family.downstream_risk(&setup.lambda, &theta)? - setup.optimum;
    Ok(ErmTrialResult {
        lambda: setup.lambda.clone(),
        theta0: setup.theta0.clone(),
        samples,
        excess_risk,
        success: excess_risk <= setup.eps,
    })
}

/// Success counts of the ERM point over a grid of sample sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityCurve {
    pub lambda: SimplexPoint,
    pub theta0: ParamVector,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub successes: Vec<usize>,
    pub mean_excess: Vec<f64>,
}

impl ComplexityCurve {
    pub fn success_rates(&self) -> Vec<f64> {
        self.successes
            .iter()
            .map(|&s| s as f64 / self.trials as f64)
            .collect()
    }

    /// Smallest grid `N` whose success rate reaches `1 − δ`, if any.
    pub fn n_hat(&self, delta: f64) -> Option<usize> {
        self.success_rates()
            .iter()
            .position(|&p| p >= 1.0 - delta)
            .map(|i| self.n_grid[i])
    }

    /// No drop between consecutive grid points exceeds three binomial
    /// standard errors.
    pub fn monotone_within_noise(&self) -> bool {
        let rates = self.success_rates();
        rates.windows(2).all(|w| {
            let p = 0.5 * (w[0] + w[1]);
            let se = (p * (1.0 - p) / self.trials as f64).sqrt();
            w[1] >= w[0] - 3.0 * se
        })
    }
}

fn validate_grid(n_grid: &[usize], trials: usize) -> Result<()> {
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(invalid("N grid must be nonempty with positive entries"));
    }
    if trials == 0 {
        return Err(invalid("trials per grid point must be positive"));
    }
    Ok(())
}

/// Runs `trials` ERM trials at every `N` in `n_grid`. Cell `(i, r)` draws from
/// its own stream derived from `(seed, i, r)`, so results do not depend on
/// scheduling.
pub fn run_erm_trials(
    family: &TaskFamily,
    lambda: &SimplexPoint,
    theta0: &ParamVector,
    eps: f64,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ComplexityCurve> {
    validate_grid(n_grid, trials)?;
    let setup = ErmSetup::new(family, lambda, theta0, eps)?;
    curve_for(family, &setup, n_grid, trials, seed)
}

fn curve_for(
    family: &TaskFamily,
    setup: &ErmSetup,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ComplexityCurve> {
    let cells: Vec<(usize, usize)> = (0..n_grid.len())
        .flat_map(|i| (0..trials).map(move |r| (i, r)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(i, r)| {
            let mut rng = cell_rng(seed, i, r);
            erm_trial(family, setup, n_grid[i], &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut successes = vec![0; n_grid.len()];
    let mut mean_excess = vec![0.0; n_grid.len()];
    for (&(i, _), res) in cells.iter().zip(&results) {
        successes[i] += res.success as usize;
        mean_excess[i] += res.excess_risk / trials as f64;
    }
    Ok(ComplexityCurve {
        lambda: setup.lambda.clone(),
        theta0: setup.theta0.clone(),
        n_grid: n_grid.to_vec(),
        trials,
        successes,
        mean_excess,
    })
}

/// Per-vertex complexity curves for one initialisation.
#[derive(Debug, Clone)]
pub struct InitComplexity {
    pub label: &'static str,
    pub theta0: ParamVector,
    /// `max_t E[ℓ_t(θ₀)]`.
    pub init_risk: f64,
    pub curves: Vec<ComplexityCurve>,
    pub bound: f64,
}

impl InitComplexity {
    pub fn n_hats(&self, delta: f64) -> Vec<Option<usize>> {
        self.curves.iter().map(|c| c.n_hat(delta)).collect()
    }

    /// `max_λ N̂`, or `None` when some vertex never reaches `1 − δ` on the grid.
    pub fn worst_n_hat(&self, delta: f64) -> Option<usize> {
        self.n_hats(delta)
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .and_then(|v| v.into_iter().max())
    }

    /// Every vertex whose N̂ ties the worst one.
    pub fn worst_vertices(&self, delta: f64) -> Vec<usize> {
        let hats = self.n_hats(delta);
        match self.worst_n_hat(delta) {
            Some(w) => hats
                .iter()
                .enumerate()
                .filter(|(_, h)| h.is_some_and(|h| (h as f64 - w as f64).abs() <= WORST_TIE_TOL))
                .map(|(t, _)| t)
                .collect(),
            None => hats
                .iter()
                .enumerate()
                .filter(|(_, h)| h.is_none())
                .map(|(t, _)| t)
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorstCaseComparison {
    pub family: String,
    pub eps: f64,
    pub delta: f64,
    pub max: InitComplexity,
    pub average: InitComplexity,
}

/// Worst-vertex empirical sample complexity from the minimax point and from
/// the average-risk minimiser, each compared against the theoretical bound.
pub fn run_worstcase_complexity_comparison(
    family: &TaskFamily,
    eps: f64,
    delta: f64,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<WorstCaseComparison> {
    validate_grid(n_grid, trials)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if let Some(t) = family.tasks().iter().position(|t| !t.has_sampler()) {
        return Err(Error::MissingSampler(t));
    }
    let theta_max = minimax_reference(family)?.theta_star;
    let theta_avg = average_minimizer(family)?;
    let max = init_complexity(family, "max", theta_max, eps, delta, n_grid, trials, seed)?;
    let average = init_complexity(family, "average", theta_avg, eps, delta, n_grid, trials, seed)?;
    Ok(WorstCaseComparison {
        family: family.name().to_string(),
        eps,
        delta,
        max,
        average,
    })
}

#[allow(clippy::too_many_arguments)]
fn init_complexity(
    family: &TaskFamily,
    label: &'static str,
    theta0: ParamVector,
    eps: f64,
    delta: f64,
    n_grid: &[usize],
    trials: usize,
    seed: u64,
) -> Result<InitComplexity> {
    let init_risk = family.worst_case_risk(&theta0)?.value;
    let bound = sample_complexity_bound(ComplexityInputs {
        eps,
        delta,
        dim: family.dim(),
        bound: family.bound(),
        lipschitz: family.lipschitz(),
        mu: family.mu(),
        init_risk,
    })?;
    let curves = (0..family.len())
        .map(|t| {
            let lambda = SimplexPoint::vertex(family.len(), t)?;
            let setup = ErmSetup::new(family, &lambda, &theta0, eps)?;
            curve_for(family, &setup, n_grid, trials, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InitComplexity {
        label,
        theta0,
        init_risk,
        curves,
        bound,
    })
}

impl WorstCaseComparison {
    /// `max_λ N̂(θ*_max) ≤ max_λ N̂(θ*_avg)`; a curve that never crosses counts
    /// as infinitely hard.
    pub fn direction_holds(&self) -> bool {
        match (
            self.max.worst_n_hat(self.delta),
            self.average.worst_n_hat(self.delta),
        ) {
            (Some(a), Some(b)) => a <= b,
            (Some(_), None) => true,
            (None, _) => false,
        }
    }

    pub fn within_bounds(&self) -> bool {
        [&self.max, &self.average].iter().all(|init| {
            init.worst_n_hat(self.delta)
                .is_some_and(|n| n as f64 <= init.bound)
        })
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "init",
            "vertex",
            "N",
            "successes",
            "trials",
            "success_rate",
            "mean_excess",
        ]);
        for init in [&self.max, &self.average] {
            for (v, c) in init.curves.iter().enumerate() {
                let rates = c.success_rates();
                for i in 0..c.n_grid.len() {
                    t.push(vec![
                        init.label.to_string(),
                        (v + 1).to_string(),
                        c.n_grid[i].to_string(),
                        c.successes[i].to_string(),
                        c.trials.to_string(),
                        fmt_float(rates[i]),
                        fmt_float(c.mean_excess[i]),
                    ]);
                }
            }
        }
        t
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::new(format!("worst-case sample complexity on {}", self.family));
        s.fact("eps", self.eps);
        s.fact("delta", self.delta);
        let show = |n: Option<usize>| n.map_or("not reached".to_string(), |n| n.to_string());
        for init in [&self.max, &self.average] {
            let worst: Vec<String> = init
                .worst_vertices(self.delta)
                .iter()
                .map(|t| (t + 1).to_string())
                .collect();
            s.fact(format!("theta0_{}", init.label), &init.theta0);
            s.fact(format!("init_risk_{}", init.label), fmt_float(init.init_risk));
            s.fact(format!("n_hat_{}", init.label), show(init.worst_n_hat(self.delta)));
            s.fact(format!("worst_vertices_{}", init.label), worst.join(" "));
            s.fact(format!("bound_{}", init.label), format!("{:.1}", init.bound));
        }
        for init in [&self.max, &self.average] {
            for (v, c) in init.curves.iter().enumerate() {
                s.check(Check::new(
                    format!("success rate nondecreasing ({} init, vertex {})", init.label, v + 1),
                    c.monotone_within_noise(),
                    "within 3 standard errors",
                ));
            }
        }
        s.check(Check::new(
            "minimax init needs no more samples",
            self.direction_holds(),
            format!(
                "{} <= {}",
                show(self.max.worst_n_hat(self.delta)),
                show(self.average.worst_n_hat(self.delta))
            ),
        ));
        for init in [&self.max, &self.average] {
            let n = init.worst_n_hat(self.delta);
            s.check(Check::new(
                format!("empirical sample size within bound ({} init)", init.label),
                n.is_some_and(|n| n as f64 <= init.bound),
                format!("{} <= {:.1}", show(n), init.bound),
            ));
        }
        s
    }
}
