//! Small dense-vector helpers on `&[f64]`. Dimensions here are tiny (d ≤ a few
//! dozen), so plain loops are all that is needed.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += a * x`
pub(crate) fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub(crate) fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Euclidean projection of `x` onto the ball `{y : ‖y − center‖ ≤ radius}`, in place.
pub(crate) fn project_ball(x: &mut [f64], center: &[f64], radius: f64) {
    let d = dist_sq(x, center).sqrt();
    if d > radius {
        let scale = if d > 0.0 { radius / d } else { 0.0 };
        for (xi, ci) in x.iter_mut().zip(center) {
            *xi = ci + (*xi - ci) * scale;
        }
    }
}
