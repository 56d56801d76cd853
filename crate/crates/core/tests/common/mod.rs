#![allow(dead_code)]

use minimax_lab::tasks::quadratic_family;
use minimax_lab::{ParamVector, SimplexPoint, TaskFamily};
use rand::Rng;

/// Quadratic family with `1 ≤ d ≤ max_dim`, `2 ≤ T ≤ max_tasks`, centres in
/// `[-1, 1]^d` and curvatures in `[0.5, 2]`.
pub fn random_family<R: Rng>(rng: &mut R, max_dim: usize, max_tasks: usize) -> TaskFamily {
    let d = rng.random_range(1..=max_dim);
    let t = rng.random_range(2..=max_tasks);
    let centers = (0..t).map(|_| random_point(rng, d, 1.0)).collect();
    let curvatures = (0..t).map(|_| rng.random_range(0.5..=2.0)).collect();
    quadratic_family(centers, curvatures, 0.0).unwrap()
}

/// Uniform point in the cube `[-half, half]^d`.
pub fn random_point<R: Rng>(rng: &mut R, d: usize, half: f64) -> ParamVector {
    ParamVector::new((0..d).map(|_| rng.random_range(-half..=half)).collect()).unwrap()
}

pub fn random_simplex<R: Rng>(rng: &mut R, t: usize) -> SimplexPoint {
    let raw: Vec<f64> = (0..t).map(|_| -rng.random_range(1e-12f64..1.0).ln()).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let head: f64 = w[..t - 1].iter().sum();
    w[t - 1] = (1.0 - head).max(0.0);
    SimplexPoint::new(w).unwrap()
}

/// Central differences with step `1e-5·max(1, |θ_i|)`.
pub fn central_difference(f: impl Fn(&ParamVector) -> f64, theta: &ParamVector) -> Vec<f64> {
    let x = theta.as_slice();
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * x[i].abs().max(1.0);
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let fp = f(&ParamVector::new(plus).unwrap());
            let fm = f(&ParamVector::new(minus).unwrap());
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
