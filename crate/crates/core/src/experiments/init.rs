use super::R0_FLOOR;
use crate::error::Result;
use crate::optimizer::{average_gd_run, swgd_run, Schedule};
use crate::oracle::{analytic_average_minimizer, grid_minimax, search_box, GridResult, MIN_GRID_RESOLUTION};
use crate::report::{fmt_float, Check, Summary, Table};
use crate::tasks::{ParamVector, TaskFamily};

const SWGD_ITERATIONS: usize = 100_000;
const AVERAGE_GD_ITERATIONS: usize = 20_000;
const AGREEMENT_FLOOR: f64 = 1e-3;

/// Minimiser of the average risk: closed form for quadratic families,
/// otherwise gradient descent with step `1/L`.
pub fn average_minimizer(family: &TaskFamily) -> Result<ParamVector> {
    if family.is_quadratic() {
        return analytic_average_minimizer(family);
    }
    let trace = average_gd_run(
        family,
        &ParamVector::zeros(family.dim()),
        1.0 / family.smoothness(),
        AVERAGE_GD_ITERATIONS,
    )?;
    Ok(trace.final_theta().clone())
}

#[derive(Debug, Clone)]
pub struct InitComparison {
    pub family: String,
    pub grid: GridResult,
    /// Terminal SWGD iterate.
    pub swgd_theta: ParamVector,
    pub swgd_value: f64,
    /// SWGD and grid agree within `max(1e-3, grid error bound)`.
    pub agree: bool,
    /// Best of the SWGD and grid points.
    pub theta_max: ParamVector,
    pub value_max: f64,
    pub theta_avg: ParamVector,
    pub value_avg: f64,
    /// `value_avg / value_max`.
    pub ratio: f64,
}

/// Worst-case downstream risk at the minimax point versus at the
/// average-risk minimiser.
pub fn run_init_comparison(family: &TaskFamily) -> Result<InitComparison> {
    let resolution = match family.dim() {
        1 => 20_001,
        2 => 1_001,
        _ => MIN_GRID_RESOLUTION,
    };
    let grid = grid_minimax(family, &search_box(family), resolution)?;
    let theta_avg = average_minimizer(family)?;
    let value_avg = family.worst_case_risk(&theta_avg)?.value;

    let r0 = theta_avg.dist(&grid.theta_star).max(R0_FLOOR);
    let schedule = Schedule::theoretical(
        r0,
        family.lipschitz(),
        family.len(),
        family.bound(),
        SWGD_ITERATIONS,
    )?
    .with_record_every(SWGD_ITERATIONS);
    let trace = swgd_run(family, &theta_avg, &schedule, None)?;
    let swgd_theta = trace.final_theta().clone();
    let swgd_value = family.worst_case_risk(&swgd_theta)?.value;
    let agree = (swgd_value - grid.value).abs() <= AGREEMENT_FLOOR.max(grid.error_bound);

    let (theta_max, value_max) = if swgd_value < grid.value {
        (swgd_theta.clone(), swgd_value)
    } else {
        (grid.theta_star.clone(), grid.value)
    };
    let ratio = if value_max > 0.0 {
        value_avg / value_max
    } else if value_avg > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };

    Ok(InitComparison {
        family: family.name().to_string(),
        grid,
        swgd_theta,
        swgd_value,
        agree,
        theta_max,
        value_max,
        theta_avg,
        value_avg,
        ratio,
    })
}

impl InitComparison {
    pub fn table(&self) -> Table {
        let mut t = Table::new([
            "init",
            "theta",
            "worst_case_risk",
        ]);
        t.push(vec!["max".into(), self.theta_max.to_string(), fmt_float(self.value_max)]);
        t.push(vec!["average".into(), self.theta_avg.to_string(), fmt_float(self.value_avg)]);
        t.push(vec!["grid".into(), self.grid.theta_star.to_string(), fmt_float(self.grid.value)]);
        t.push(vec!["swgd".into(), self.swgd_theta.to_string(), fmt_float(self.swgd_value)]);
        t
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::new(format!("init comparison on {}", self.family));
        s.fact("theta_max", &self.theta_max);
        s.fact("worst_risk_max", fmt_float(self.value_max));
        s.fact("theta_avg", &self.theta_avg);
        s.fact("worst_risk_avg", fmt_float(self.value_avg));
        s.fact("ratio", format!("{:.6}", self.ratio));
        s.fact("grid_error_bound", fmt_float(self.grid.error_bound));
        s.check(Check::new(
            "average init is no better in the worst case",
            self.ratio >= 1.0 - 1e-9,
            format!("ratio {:.6}", self.ratio),
        ));
        s.check(Check::new(
            "swgd agrees with grid oracle",
            self.agree,
            format!(
                "|{:.6e} - {:.6e}| <= {:.1e}",
                self.swgd_value,
                self.grid.value,
                AGREEMENT_FLOOR.max(self.grid.error_bound)
            ),
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{gap_family, quadratic_family};

    fn p(x: f64) -> ParamVector {
        ParamVector::scalar(x).unwrap()
    }

    #[test]
    fn weighted_pair_ratio() {
        let fam = quadratic_family(vec![p(0.0), p(1.0)], vec![1.0, 4.0], 0.0).unwrap();
        let c = run_init_comparison(&fam).unwrap();
        assert!((c.value_avg - 0.64).abs() < 1e-12);
        assert!((c.value_max - 4.0 / 9.0).abs() < 1e-8, "{}", c.value_max);
        assert!((c.ratio - 1.44).abs() < 1e-6);
        assert!(c.summary().all_passed());
    }

    #[test]
    fn symmetric_pair_ratio_is_one() {
        let fam = quadratic_family(vec![p(0.0), p(1.0)], vec![1.0, 1.0], 0.0).unwrap();
        let c = run_init_comparison(&fam).unwrap();
        assert!((c.ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gap_ratio_matches_closed_form() {
        let c = run_init_comparison(&gap_family(16).unwrap()).unwrap();
        let expected = (1.0 + 15f64.sqrt()).powi(2) / 4.0;
        assert!((c.ratio / expected - 1.0).abs() < 1e-4, "{} vs {expected}", c.ratio);
        assert!(c.agree);
    }
}
