//! End-to-end studies. Each returns a structured report that renders to a CSV
//! table and a PASS/FAIL summary.

mod balancers;
mod convergence;
mod erm;
mod init;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use balancers::{run_balancer_comparison, BalancerComparison, BalancerRow};
pub use convergence::{run_convergence_study, ConvergenceReport, ConvergenceRow, ScheduleMode};
pub use erm::{
    erm_trial, run_erm_trials, run_worstcase_complexity_comparison, ComplexityCurve, ErmSetup,
    ErmTrialResult, InitComplexity, WorstCaseComparison,
};
pub use init::{average_minimizer, run_init_comparison, InitComparison};

/// Floor applied to `R₀ = ‖θ₀ − θ*‖` when building theoretical schedules, so
/// a start at the optimum still yields a valid (tiny) step size.
pub const R0_FLOOR: f64 = 1e-8;

/// Deterministic PRNG for one experiment cell. Streams are distinct for each
/// `(grid index, trial)` pair under the same master seed.
pub fn cell_rng(master_seed: u64, grid_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((grid_index as u64) << 32) | trial as u64);
    rng
}

/// Default sample-size grid: powers of two `1, 2, …, 2^max_exp`.
pub fn power_of_two_grid(max_exp: u32) -> Vec<usize> {
    (0..=max_exp).map(|e| 1usize << e).collect()
}
