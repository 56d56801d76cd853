//! Ground-truth solvers and bound calculators used to certify the optimizers.
//!
//! Nothing here shares code paths with [`crate::optimizer`]'s weighted
//! descent: minimax optima come from exhaustive grids or, for quadratic
//! families, from enumerating the finitely many active-set candidates.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::optimizer::{gd_run, Downstream, RunTrace};
use crate::tasks::{ParamVector, SimplexPoint, TaskFamily};

/// Largest dimension the brute-force oracles accept.
pub const MAX_ORACLE_DIM: usize = 3;

/// Smallest grid resolution (points per axis) accepted by [`grid_minimax`].
pub const MIN_GRID_RESOLUTION: usize = 101;

const GOLDEN_ITERS: usize = 120;

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub theta_star: ParamVector,
    pub value: f64,
    /// Largest spacing between adjacent grid points over all axes.
    pub spacing: f64,
    /// `L′·spacing·√d`: the value is within this of the true minimax value.
    pub error_bound: f64,
}

/// Exhaustive evaluation of `max_t E[ℓ_t]` on a regular grid over `bounds`,
/// followed by one golden-section pass along each axis around the best grid
/// point.
///
/// Ties on the grid go to the lowest linear index, so the result does not
/// depend on how the work is split across threads.
pub fn grid_minimax(
    family: &TaskFamily,
    bounds: &[(f64, f64)],
    resolution: usize,
) -> Result<GridResult> {
    let d = family.dim();
    if d > MAX_ORACLE_DIM {
        return Err(Error::OracleUnavailable(format!(
            "grid oracle supports d <= {MAX_ORACLE_DIM}, family has d = {d}"
        )));
    }
    if bounds.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bounds.len(),
        });
    }
    if resolution < MIN_GRID_RESOLUTION {
        return Err(invalid(format!(
            "grid resolution must be at least {MIN_GRID_RESOLUTION}, got {resolution}"
        )));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
        return Err(invalid("grid bounds must be finite with lo < hi"));
    }

    let steps: Vec<f64> = bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) / (resolution - 1) as f64)
        .collect();
    let point = |mut idx: usize| -> Vec<f64> {
        let mut x = vec![0.0; d];
        for (axis, xi) in x.iter_mut().enumerate() {
            let i = idx % resolution;
            idx /= resolution;
            *xi = bounds[axis].0 + i as f64 * steps[axis];
        }
        x
    };
    let total = resolution.pow(d as u32);
    let (best_value, best_idx) = (0..total)
        .into_par_iter()
        .map(|i| (family.worst_value_raw(&point(i)), i))
        .reduce(
            || (f64::INFINITY, usize::MAX),
            |a, b| if (b.0, b.1) < (a.0, a.1) { b } else { a },
        );

    let mut best = point(best_idx);
    let mut value = best_value;
    for axis in 0..d {
        let lo = (best[axis] - steps[axis]).max(bounds[axis].0);
        let hi = (best[axis] + steps[axis]).min(bounds[axis].1);
        let mut probe = best.clone();
        let (x, v) = golden_section(lo, hi, |t| {
            probe[axis] = t;
            family.worst_value_raw(&probe)
        });
        if v < value {
            best[axis] = x;
            value = v;
        }
    }

    let spacing = steps.iter().copied().fold(0.0, f64::max);
    Ok(GridResult {
        theta_star: ParamVector::new(best)?,
        value,
        spacing,
        error_bound: family.lipschitz() * spacing * (d as f64).sqrt(),
    })
}

fn golden_section(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    for _ in 0..GOLDEN_ITERS {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Grid box for a family: the bounding box of the centres, padded, for
/// quadratic families (the minimax point is a weighted mean of centres);
/// otherwise the cube around the domain ball.
pub fn search_box(family: &TaskFamily) -> Vec<(f64, f64)> {
    let d = family.dim();
    if family.is_quadratic() {
        (0..d)
            .map(|axis| {
                let coords = family
                    .tasks()
                    .iter()
                    .map(|t| t.as_quadratic().expect("quadratic").center()[axis]);
                let lo = coords.clone().fold(f64::INFINITY, f64::min);
                let hi = coords.fold(f64::NEG_INFINITY, f64::max);
                let pad = 0.05 * (hi - lo) + 0.05;
                (lo - pad, hi + pad)
            })
            .collect()
    } else {
        let r = family.domain_radius();
        vec![(-r, r); d]
    }
}

/// Exact minimax point of a quadratic family with `d ≤ 2`.
///
/// At the optimum the active tasks number at most `d + 1`, so the optimum is
/// one of: a centre; the balance point of a pair on the segment between its
/// centres; or (in 2-D) a point where three risks coincide. All candidates
/// are enumerated and the one with the smallest worst-case risk is returned.
pub fn quadratic_minimax(family: &TaskFamily) -> Result<(ParamVector, f64)> {
    let d = family.dim();
    if d > 2 {
        return Err(Error::OracleUnavailable(format!(
            "closed-form minimax supports d <= 2, family has d = {d}"
        )));
    }
    let quads = family
        .tasks()
        .iter()
        .enumerate()
        .map(|(t, task)| task.as_quadratic().ok_or(Error::NotQuadratic(t)))
        .collect::<Result<Vec<_>>>()?;

    let mut candidates: Vec<Vec<f64>> = quads.iter().map(|q| q.center().to_vec()).collect();
    for i in 0..quads.len() {
        for j in i + 1..quads.len() {
            let (mi, mj) = (quads[i].center(), quads[j].center());
            let (si, sj) = (quads[i].curvature().sqrt(), quads[j].curvature().sqrt());
            let s = sj / (si + sj);
            candidates.push(mi.iter().zip(mj).map(|(a, b)| a + s * (b - a)).collect());
        }
    }
    if d == 2 {
        for i in 0..quads.len() {
            for j in i + 1..quads.len() {
                for k in j + 1..quads.len() {
                    let terms = [i, j, k].map(|t| (quads[t].curvature(), quads[t].center()));
                    candidates.extend(equal_risk_points(terms));
                }
            }
        }
    }

    let (theta, value) = candidates
        .into_iter()
        .filter(|c| linalg::all_finite(c))
        .map(|c| {
            let v = family.worst_value_raw(&c);
            (c, v)
        })
        .fold((Vec::new(), f64::INFINITY), |best, cand| {
            if cand.1 < best.1 {
                cand
            } else {
                best
            }
        });
    Ok((ParamVector::new(theta)?, value))
}

/// Points of the plane where `c_a‖θ − m_a‖²` agree for all three terms.
fn equal_risk_points(terms: [(f64, &[f64]); 3]) -> Vec<Vec<f64>> {
    // c_a‖θ−m_a‖² − c_b‖θ−m_b‖² = q‖θ‖² − 2⟨v, θ⟩ + e
    let diff = |a: (f64, &[f64]), b: (f64, &[f64])| {
        let q = a.0 - b.0;
        let v = [a.0 * a.1[0] - b.0 * b.1[0], a.0 * a.1[1] - b.0 * b.1[1]];
        let e = a.0 * linalg::norm_sq(a.1) - b.0 * linalg::norm_sq(b.1);
        (q, v, e)
    };
    let (q1, v1, e1) = diff(terms[0], terms[1]);
    let (q2, v2, e2) = diff(terms[0], terms[2]);
    let scale = terms.iter().map(|t| t.0).fold(0.0, f64::max);
    let tiny = 1e-14 * scale;

    if q1.abs() <= tiny && q2.abs() <= tiny {
        // both loci are lines: 2⟨v, θ⟩ = e
        let det = v1[0] * v2[1] - v1[1] * v2[0];
        if det.abs() <= 1e-14 * (linalg::norm(&v1) * linalg::norm(&v2)).max(f64::MIN_POSITIVE) {
            return Vec::new();
        }
        let x = (e1 * v2[1] - e2 * v1[1]) / (2.0 * det);
        let y = (v1[0] * e2 - v2[0] * e1) / (2.0 * det);
        return vec![vec![x, y]];
    }

    // q2·E1 − q1·E2 cancels the quadratic term: ⟨a, θ⟩ = b
    let a = [2.0 * (q2 * v1[0] - q1 * v2[0]), 2.0 * (q2 * v1[1] - q1 * v2[1])];
    let b = q2 * e1 - q1 * e2;
    let a_norm_sq = linalg::norm_sq(&a);
    if a_norm_sq <= f64::MIN_POSITIVE {
        return Vec::new();
    }
    let p0 = [a[0] * b / a_norm_sq, a[1] * b / a_norm_sq];
    let a_norm = a_norm_sq.sqrt();
    let u = [-a[1] / a_norm, a[0] / a_norm];
    let (q, v, e) = if q1.abs() >= q2.abs() { (q1, v1, e1) } else { (q2, v2, e2) };
    // q s² + 2 s (q⟨p0,u⟩ − ⟨v,u⟩) + (q‖p0‖² − 2⟨v,p0⟩ + e) = 0
    let half_b = q * linalg::dot(&p0, &u) - linalg::dot(&v, &u);
    let c = q * linalg::norm_sq(&p0) - 2.0 * linalg::dot(&v, &p0) + e;
    let disc = half_b * half_b - q * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let root = disc.sqrt();
    // numerically stable pair of roots
    let t = -(half_b + half_b.signum() * root);
    let mut roots = vec![t / q];
    if t != 0.0 {
        roots.push(c / t);
    }
    roots
        .into_iter()
        .map(|s| vec![p0[0] + s * u[0], p0[1] + s * u[1]])
        .collect()
}

/// Best available minimax solution for a family.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxSolution {
    pub theta_star: ParamVector,
    pub value: f64,
    /// True when the point comes from the closed-form enumeration.
    pub exact: bool,
    /// Guaranteed gap to the true optimum (0 for exact solutions).
    pub error_bound: f64,
}

/// Closed-form enumeration for quadratic families with `d ≤ 2`, otherwise a
/// dense grid (d ≤ 3).
pub fn minimax_reference(family: &TaskFamily) -> Result<MinimaxSolution> {
    if family.is_quadratic() && family.dim() <= 2 {
        let (theta_star, value) = quadratic_minimax(family)?;
        return Ok(MinimaxSolution {
            theta_star,
            value,
            exact: true,
            error_bound: 0.0,
        });
    }
    let resolution = match family.dim() {
        1 => 20_001,
        2 => 1_001,
        _ => MIN_GRID_RESOLUTION,
    };
    let grid = grid_minimax(family, &search_box(family), resolution)?;
    Ok(MinimaxSolution {
        theta_star: grid.theta_star,
        value: grid.value,
        exact: false,
        error_bound: grid.error_bound,
    })
}

/// `(Σ c_t m_t)/(Σ c_t)`, the minimiser of the average risk of a quadratic
/// family.
pub fn analytic_average_minimizer(family: &TaskFamily) -> Result<ParamVector> {
    quadratic_downstream_minimizer(family, &SimplexPoint::uniform(family.len())?)
}

fn quadratic_downstream_minimizer(
    family: &TaskFamily,
    lambda: &SimplexPoint,
) -> Result<ParamVector> {
    family.check_lambda(lambda)?;
    let mut num = vec![0.0; family.dim()];
    let mut den = 0.0;
    for (t, (task, &l)) in family.tasks().iter().zip(lambda.weights()).enumerate() {
        let q = task.as_quadratic().ok_or(Error::NotQuadratic(t))?;
        linalg::axpy(l * q.curvature(), q.center(), &mut num);
        den += l * q.curvature();
    }
    ParamVector::new(num.into_iter().map(|x| x / den).collect())
}

/// `argmin_θ Σ λ_t E[ℓ_t(θ)]`: closed form for quadratic families, otherwise
/// long gradient descent with step `1/L_λ` from the origin.
pub fn downstream_minimizer(family: &TaskFamily, lambda: &SimplexPoint) -> Result<ParamVector> {
    if family.is_quadratic() {
        return quadratic_downstream_minimizer(family, lambda);
    }
    let objective = Downstream::new(family, lambda)?;
    let eta = 1.0 / family.downstream_smoothness(lambda);
    let trace = gd_run(&objective, &ParamVector::zeros(family.dim()), eta, 20_000)?;
    Ok(trace.final_theta().clone())
}

/// Ball `{θ : ‖θ − center‖² ≤ radius_sq}` that descent iterates never leave.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinSpec {
    pub center: ParamVector,
    pub radius_sq: f64,
}

impl BasinSpec {
    pub fn new(center: ParamVector, radius_sq: f64) -> Result<Self> {
        if !(radius_sq.is_finite() && radius_sq >= 0.0) {
            return Err(invalid(format!("basin radius² must be nonnegative, got {radius_sq}")));
        }
        Ok(Self { center, radius_sq })
    }

    /// `Θ_λ(θ₀)`: centre `θ*_λ`, radius² `(2/μ_λ)·E[ℓ_λ(θ₀)]`.
    pub fn downstream(family: &TaskFamily, lambda: &SimplexPoint, theta0: &ParamVector) -> Result<Self> {
        let center = downstream_minimizer(family, lambda)?;
        let risk = family.downstream_risk(lambda, theta0)?;
        Self::new(center, 2.0 / family.downstream_mu(lambda) * risk)
    }

    /// Descent bound `(2/μ)(f(θ₀) − f(θ*))` around the minimiser `center`.
    pub fn descent(center: ParamVector, mu: f64, suboptimality: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(invalid("strong convexity must be positive"));
        }
        Self::new(center, 2.0 / mu * suboptimality.max(0.0))
    }

    pub fn radius(&self) -> f64 {
        self.radius_sq.sqrt()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        linalg::dist_sq(theta, self.center.as_slice()) <= self.radius_sq * (1.0 + 1e-12) + 1e-24
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinReport {
    /// `η ≤ 1/L` held for the trace.
    pub precondition_met: bool,
    pub checked: usize,
    /// First iterate outside the basin: `(k, ‖θ_k − θ*‖²)`.
    pub first_violation: Option<(usize, f64)>,
    /// Largest `‖θ_k − θ*‖² / radius²` seen.
    pub max_ratio: f64,
}

impl BasinReport {
    pub fn passed(&self) -> bool {
        self.precondition_met && self.first_violation.is_none()
    }
}

/// Checks every recorded iterate against the basin. A step size above
/// `1/smoothness` is reported as an unmet precondition, not a failure of the
/// basin property.
pub fn basin_check(trace: &RunTrace, basin: &BasinSpec, smoothness: f64) -> BasinReport {
    let precondition_met = trace.step_size <= (1.0 / smoothness) * (1.0 + 1e-12);
    let mut first_violation = None;
    let mut max_ratio: f64 = 0.0;
    for r in &trace.records {
        let dist_sq = linalg::dist_sq(r.theta.as_slice(), basin.center.as_slice());
        let ratio = if basin.radius_sq > 0.0 {
            dist_sq / basin.radius_sq
        } else if dist_sq > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        max_ratio = max_ratio.max(ratio);
        if first_violation.is_none() && !basin.contains(r.theta.as_slice()) {
            first_violation = Some((r.k, dist_sq));
        }
    }
    BasinReport {
        precondition_met,
        checked: trace.records.len(),
        first_violation,
        max_ratio,
    }
}

/// Inputs of the worst-case sample-complexity bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityInputs {
    pub eps: f64,
    pub delta: f64,
    pub dim: usize,
    pub bound: f64,
    pub lipschitz: f64,
    pub mu: f64,
    /// Worst-case initial downstream risk `max_λ E[ℓ_λ(θ₀)]`.
    pub init_risk: f64,
}

/// `(8dB²/ε²)·ln(1 + (16L′/ε)·√((2/μ)·init_risk)) + (8B²/ε²)·ln(2/δ)`.
pub fn sample_complexity_bound(inputs: ComplexityInputs) -> Result<f64> {
    let ComplexityInputs {
        eps,
        delta,
        dim,
        bound,
        lipschitz,
        mu,
        init_risk,
    } = inputs;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if dim == 0 || !(bound > 0.0 && lipschitz > 0.0 && mu > 0.0) {
        return Err(invalid("d, B, L' and mu must be positive"));
    }
    if !(init_risk.is_finite() && init_risk >= 0.0) {
        return Err(invalid(format!("initial risk must be nonnegative, got {init_risk}")));
    }
    let scale = 8.0 * bound * bound / (eps * eps);
    let radius = (2.0 / mu * init_risk).sqrt();
    Ok(scale * dim as f64 * (1.0 + 16.0 * lipschitz / eps * radius).ln() + scale * (2.0 / delta).ln())
}

/// `(2·radius/ε + 1)^d`, an upper bound on the ε-covering number of a ball.
pub fn covering_number_bound(radius: f64, eps: f64, dim: usize) -> Result<f64> {
    if !(radius > 0.0 && eps > 0.0) || dim == 0 {
        return Err(invalid("covering number needs radius > 0, eps > 0, d >= 1"));
    }
    Ok((2.0 * radius / eps + 1.0).powi(dim as i32))
}
