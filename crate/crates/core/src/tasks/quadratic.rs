use std::sync::Arc;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{ParamVector, RiskModel, Task, TaskConstants, TaskFamily};
use crate::error::{invalid, Result};
use crate::linalg;

/// Isotropic quadratic risk `c·‖θ − m‖²`.
///
/// The sampler draws `z ~ N(m, σ²I)` and reports `c·‖θ − z‖² − c·σ²·d`, which
/// has expectation exactly `c·‖θ − m‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    center: Vec<f64>,
    curvature: f64,
    noise_sigma: f64,
}

impl Quadratic {
    pub fn new(center: Vec<f64>, curvature: f64, noise_sigma: f64) -> Result<Self> {
        if !(curvature.is_finite() && curvature > 0.0) {
            return Err(invalid(format!("curvature must be positive, got {curvature}")));
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(invalid(format!("noise sigma must be nonnegative, got {noise_sigma}")));
        }
        if center.is_empty() || !linalg::all_finite(&center) {
            return Err(invalid("center must be a finite, non-empty vector"));
        }
        Ok(Self {
            center,
            curvature,
            noise_sigma,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    fn noise_offset(&self) -> f64 {
        self.curvature * self.noise_sigma * self.noise_sigma * self.center.len() as f64
    }
}

impl RiskModel for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn expected_risk(&self, theta: &[f64]) -> f64 {
        self.curvature * linalg::dist_sq(theta, &self.center)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.center)
            .map(|(x, m)| 2.0 * self.curvature * (x - m))
            .collect()
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let sigma = self.noise_sigma;
        Some(
            self.center
                .iter()
                .map(|m| {
                    let n: f64 = StandardNormal.sample(rng);
                    m + sigma * n
                })
                .collect(),
        )
    }

    fn sample_loss(&self, theta: &[f64], z: &[f64]) -> f64 {
        self.curvature * linalg::dist_sq(theta, z) - self.noise_offset()
    }

    fn sample_gradient(&self, theta: &[f64], z: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(z)
            .map(|(x, zi)| 2.0 * self.curvature * (x - zi))
            .collect()
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }
}

/// Construction options shared by the family constructors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FamilyOptions {
    pub noise_sigma: f64,
    /// Radius of the origin-centred ball on which L′ and B are certified.
    /// `None` picks the constructor's default.
    pub domain_radius: Option<f64>,
}

/// Quadratic family `c_t·‖θ − m_t‖²` with the default domain radius
/// `10·max‖m_t‖ + 1`.
pub fn quadratic_family(
    centers: Vec<ParamVector>,
    curvatures: Vec<f64>,
    noise_sigma: f64,
) -> Result<TaskFamily> {
    quadratic_family_with(
        centers,
        curvatures,
        FamilyOptions {
            noise_sigma,
            domain_radius: None,
        },
    )
}

pub fn quadratic_family_with(
    centers: Vec<ParamVector>,
    curvatures: Vec<f64>,
    options: FamilyOptions,
) -> Result<TaskFamily> {
    build_quadratic("quadratic", centers, curvatures, options, |max_norm| {
        10.0 * max_norm + 1.0
    })
}

/// The one-dimensional family `f_1(θ) = θ²`, `f_t(θ) = (θ − 1)²/(T − 1)` for
/// `t = 2..T`, on the domain ball of radius 1.
///
/// Its average-risk minimiser is `θ = 1/2` (worst-case risk 1/4) while the
/// minimax point is `1/(1 + √(T−1))` with worst-case risk
/// `1/(1 + √(T−1))²`, so the ratio grows like `T/4`.
pub fn gap_family(tasks: usize) -> Result<TaskFamily> {
    gap_family_with(tasks, FamilyOptions::default())
}

pub fn gap_family_with(tasks: usize, options: FamilyOptions) -> Result<TaskFamily> {
    if tasks < 2 {
        return Err(invalid(format!("gap family needs T >= 2, got {tasks}")));
    }
    let mut centers = vec![ParamVector::from_raw(vec![0.0])];
    let mut curvatures = vec![1.0];
    let tail = 1.0 / (tasks - 1) as f64;
    for _ in 1..tasks {
        centers.push(ParamVector::from_raw(vec![1.0]));
        curvatures.push(tail);
    }
    let mut family = build_quadratic("gap", centers, curvatures, options, |_| 1.0)?;
    family.name = format!("gap-{tasks}");
    Ok(family)
}

fn build_quadratic(
    name: &str,
    centers: Vec<ParamVector>,
    curvatures: Vec<f64>,
    options: FamilyOptions,
    default_radius: impl Fn(f64) -> f64,
) -> Result<TaskFamily> {
    if centers.is_empty() {
        return Err(invalid("a quadratic family needs at least one task"));
    }
    if centers.len() != curvatures.len() {
        return Err(invalid(format!(
            "{} centers but {} curvatures",
            centers.len(),
            curvatures.len()
        )));
    }
    let max_norm = centers.iter().map(ParamVector::norm).fold(0.0, f64::max);
    let radius = options.domain_radius.unwrap_or_else(|| default_radius(max_norm));
    if !(radius.is_finite() && radius > 0.0) {
        return Err(invalid(format!("domain radius must be positive, got {radius}")));
    }

    let tasks = centers
        .into_iter()
        .zip(curvatures)
        .map(|(center, c)| {
            let m_norm = center.norm();
            let model = Quadratic::new(center.into_inner(), c, options.noise_sigma)?;
            let constants = TaskConstants {
                mu: 2.0 * c,
                smoothness: 2.0 * c,
                lipschitz: 2.0 * c * (radius + max_norm),
                bound: c * (radius + m_norm).powi(2),
            };
            Task::new(Arc::new(model), constants)
        })
        .collect::<Result<Vec<_>>>()?;
    TaskFamily::new(name, tasks, radius)
}
