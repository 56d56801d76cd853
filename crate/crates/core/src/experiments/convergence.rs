use rayon::prelude::*;

use super::R0_FLOOR;
use crate::error::Result;
use crate::optimizer::{swgd_run, Schedule};
use crate::oracle::{minimax_reference, MinimaxSolution};
use crate::report::{fmt_float, Check, Summary, Table};
use crate::tasks::{ParamVector, TaskFamily};

/// Relative factor the excess must drop by between `K` and `16K`.
pub const RATE_RATIO_MIN: f64 = 3.0;

/// Below this excess at `K` the rate comparison carries no information.
const RATE_EXCESS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleMode {
    /// `η = R₀/(L′√K)` and the increasing α schedule.
    Theoretical,
    Constant { eta: f64, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub iterations: usize,
    /// `max_t E[ℓ_t(θ̄_K)]`.
    pub worst_risk: f64,
    /// Worst-case risk of `θ̄_K` above the oracle optimum.
    pub excess: f64,
    /// `2R₀L′/√K`.
    pub bound: f64,
    pub satisfied: bool,
    pub averaged: ParamVector,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub family: String,
    pub theta0: ParamVector,
    pub mode: ScheduleMode,
    pub oracle: MinimaxSolution,
    pub r0: f64,
    pub lipschitz: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Runs SWGD for each `K` and compares the averaged iterate with the oracle
/// optimum and the `2R₀L′/√K` rate bound.
pub fn run_convergence_study(
    family: &TaskFamily,
    theta0: &ParamVector,
    k_list: &[usize],
    mode: ScheduleMode,
) -> Result<ConvergenceReport> {
    family.check_theta(theta0)?;
    let oracle = minimax_reference(family)?;
    let r0 = theta0.dist(&oracle.theta_star).max(R0_FLOOR);
    let lipschitz = family.lipschitz();
    // A grid optimum overstates the true value by at most its error bound;
    // measuring against the lower end keeps the excess conservative.
    let reference = oracle.value - oracle.error_bound;

    let rows = k_list
        .par_iter()
        .map(|&k| {
            let schedule = match mode {
                ScheduleMode::Theoretical => {
                    Schedule::theoretical(r0, lipschitz, family.len(), family.bound(), k)?
                }
                ScheduleMode::Constant { eta, alpha } => Schedule::constant(eta, alpha, k)?,
            }
            .with_record_every(k.max(1));
            let trace = swgd_run(family, theta0, &schedule, None)?;
            let averaged = trace.averaged().clone();
            let worst_risk = family.worst_case_risk(&averaged)?.value;
            let excess = worst_risk - reference;
            let bound = 2.0 * r0 * lipschitz / (k as f64).sqrt();
            Ok(ConvergenceRow {
                iterations: k,
                worst_risk,
                excess,
                bound,
                satisfied: excess <= bound,
                averaged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ConvergenceReport {
        family: family.name().to_string(),
        theta0: theta0.clone(),
        mode,
        oracle,
        r0,
        lipschitz,
        rows,
    })
}

impl ConvergenceReport {
    pub fn all_bounds_hold(&self) -> bool {
        self.rows.iter().all(|r| r.satisfied)
    }

    /// `(K, 16K, excess(K)/excess(16K))` for every such pair in the study.
    /// Pairs whose excess at `K` is already negligible are skipped.
    pub fn rate_ratios(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for a in &self.rows {
            if a.excess <= RATE_EXCESS_FLOOR {
                continue;
            }
            if let Some(b) = self.rows.iter().find(|b| b.iterations == 16 * a.iterations) {
                let ratio = if b.excess > 0.0 { a.excess / b.excess } else { f64::INFINITY };
                out.push((a.iterations, b.iterations, ratio));
            }
        }
        out
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "K",
            "excess",
            "bound_value",
            "bound_satisfied",
            "worst_risk",
            "R0",
            "Lp",
            "oracle_theta_star",
            "oracle_value",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.iterations.to_string(),
                fmt_float(r.excess),
                fmt_float(r.bound),
                r.satisfied.to_string(),
                fmt_float(r.worst_risk),
                fmt_float(self.r0),
                fmt_float(self.lipschitz),
                self.oracle.theta_star.to_string(),
                fmt_float(self.oracle.value),
            ]);
        }
        t
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::new(format!("convergence study on {}", self.family));
        s.fact("oracle_value", fmt_float(self.oracle.value));
        s.fact("oracle_exact", self.oracle.exact);
        s.fact("R0", fmt_float(self.r0));
        s.fact("Lp", fmt_float(self.lipschitz));
        for r in &self.rows {
            s.fact(
                format!("K={}", r.iterations),
                format!(
                    "excess {:.6e}, bound {:.6e}, bound satisfied: {}",
                    r.excess, r.bound, r.satisfied
                ),
            );
        }
        if self.mode == ScheduleMode::Theoretical {
            for r in &self.rows {
                s.check(Check::new(
                    format!("rate bound at K={}", r.iterations),
                    r.satisfied,
                    format!("{:.3e} <= {:.3e}", r.excess, r.bound),
                ));
            }
            for (k, k16, ratio) in self.rate_ratios() {
                s.check(Check::new(
                    format!("excess ratio K={k} vs K={k16}"),
                    ratio >= RATE_RATIO_MIN,
                    format!("{ratio:.3} >= {RATE_RATIO_MIN}"),
                ));
            }
        }
        s
    }
}
