//! Numerical differentiation on uniform grids.

use super::Real;

/// Central-difference gradient of `y` over a uniform grid with spacing `dx`;
/// one-sided differences at the boundaries. Needs at least two samples.
pub fn central_gradient<R: Real>(y: &[R], dx: R) -> Vec<R> {
    let n = y.len();
    assert!(n >= 2, "gradient needs at least two samples");
    let two = R::from_f64_const(2.0);
    let mut out = Vec::with_capacity(n);
    out.push((y[1] - y[0]) / dx);
    for i in 1..n - 1 {
        out.push((y[i + 1] - y[i - 1]) / (two * dx));
    }
    out.push((y[n - 1] - y[n - 2]) / dx);
    out
}
