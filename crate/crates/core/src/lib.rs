//! Minimax multi-task pre-training on convex task families.
//!
//! The crate implements softmax weighted gradient descent for
//! `min_θ max_t E[ℓ_t(θ)]`, the usual task-balancing baselines, independent
//! oracles (brute-force and closed-form minimax, basin and sample-complexity
//! bounds), and studies that check the convergence and robustness guarantees
//! on synthetic quadratic families.

pub mod cli;
pub mod error;
pub mod experiments;
mod linalg;
pub mod optimizer;
pub mod oracle;
pub mod report;
pub mod tasks;
pub mod weighting;

pub use error::{Error, Result};
pub use tasks::{ParamVector, SimplexPoint, TaskFamily};
