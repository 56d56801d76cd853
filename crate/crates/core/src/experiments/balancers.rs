use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::optimizer::{run_balancer, Schedule, StepMode};
use crate::report::{fmt_float, Check, Summary, Table};
use crate::tasks::{ParamVector, TaskFamily};
use crate::weighting::{AlphaSchedule, Balancer};

/// A run counts as converged when its final weighted gradient is this small.
pub const CONVERGED_GRAD_NORM: f64 = 1e-6;
const COMPARE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BalancerRow {
    pub balancer: Balancer,
    pub worst_risk: f64,
    pub avg_risk: f64,
    pub gradient_evaluations: usize,
    pub final_theta: ParamVector,
    pub final_grad_norm: f64,
}

impl BalancerRow {
    pub fn converged(&self) -> bool {
        self.final_grad_norm <= CONVERGED_GRAD_NORM
    }
}

#[derive(Debug, Clone)]
pub struct BalancerComparison {
    pub family: String,
    pub rows: Vec<BalancerRow>,
}

/// Runs each balancer for `iterations` steps of size `eta` and reports the
/// terminal iterate. `alpha` only affects the minimax row.
pub fn run_balancer_comparison(
    family: &TaskFamily,
    theta0: &ParamVector,
    eta: f64,
    iterations: usize,
    methods: &[Balancer],
    alpha: AlphaSchedule,
) -> Result<BalancerComparison> {
    if methods.is_empty() {
        return Err(invalid("no balancers selected"));
    }
    family.check_theta(theta0)?;
    let schedule = Schedule::new(StepMode::Constant(eta), alpha, iterations)?
        .with_record_every(iterations.max(1));
    let rows = methods
        .par_iter()
        .map(|&balancer| {
            let trace = run_balancer(family, theta0, balancer, &schedule, None)?;
            let last = trace.records.last().expect("at least one iteration");
            let final_theta = trace.final_theta().clone();
            let risks = family.risks(&final_theta)?;
            Ok(BalancerRow {
                balancer,
                worst_risk: family.worst_case_risk(&final_theta)?.value,
                avg_risk: risks.iter().sum::<f64>() / risks.len() as f64,
                gradient_evaluations: trace.gradient_evaluations(),
                final_theta,
                final_grad_norm: last.grad_norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BalancerComparison {
        family: family.name().to_string(),
        rows,
    })
}

impl BalancerComparison {
    pub fn row(&self, balancer: Balancer) -> Option<&BalancerRow> {
        self.rows.iter().find(|r| r.balancer == balancer)
    }

    /// Minimax has the (weakly) lowest terminal worst-case risk.
    pub fn minimax_is_most_robust(&self) -> Option<bool> {
        let mm = self.row(Balancer::Minimax)?;
        Some(
            self.rows
                .iter()
                .all(|r| mm.worst_risk <= r.worst_risk + COMPARE_TOL),
        )
    }

    /// Uniform weighting has the (weakly) lowest average risk among converged
    /// runs. `None` when it is absent or did not converge.
    pub fn uniform_has_lowest_average(&self) -> Option<bool> {
        let none = self.row(Balancer::Baseline(crate::weighting::BaselineMethod::Uniform))?;
        if !none.converged() {
            return None;
        }
        Some(
            self.rows
                .iter()
                .filter(|r| r.converged())
                .all(|r| none.avg_risk <= r.avg_risk + COMPARE_TOL),
        )
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "balancer",
            "worst_risk",
            "avg_risk",
            "gradient_evaluations",
            "final_theta",
            "final_grad_norm",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.balancer.key().to_string(),
                fmt_float(r.worst_risk),
                fmt_float(r.avg_risk),
                r.gradient_evaluations.to_string(),
                r.final_theta.to_string(),
                fmt_float(r.final_grad_norm),
            ]);
        }
        t
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::new(format!("balancer comparison on {}", self.family));
        for r in &self.rows {
            s.fact(
                r.balancer.key(),
                format!("worst {:.6e}, average {:.6e}", r.worst_risk, r.avg_risk),
            );
        }
        if let Some(ok) = self.minimax_is_most_robust() {
            let mm = self.row(Balancer::Minimax).expect("checked");
            s.check(Check::new(
                "minimax has the lowest worst-case risk",
                ok,
                format!("minimax {:.6e}", mm.worst_risk),
            ));
        }
        if let Some(ok) = self.uniform_has_lowest_average() {
            s.check(Check::new(
                "uniform weighting has the lowest average risk among converged runs",
                ok,
                "",
            ));
        }
        s
    }
}
