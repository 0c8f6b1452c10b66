//! Least-squares fits, medians and correlation.

use super::Real;

/// Result of an ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<R> {
    pub slope: R,
    pub intercept: R,
    /// Coefficient of determination of the fit.
    pub r_squared: R,
}

/// Ordinary least-squares line through `(x, y)` pairs. Summation order is
/// fixed (left to right) so identical inputs give bit-identical results.
/// Returns `None` for fewer than two points or zero x-variance.
pub fn linear_fit<R: Real>(x: &[R], y: &[R]) -> Option<LinearFit<R>> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = R::from_usize(x.len()).unwrap();
    let mut sx = R::zero();
    let mut sy = R::zero();
    for i in 0..x.len() {
        sx = sx + x[i];
        sy = sy + y[i];
    }
    let mx = sx / n;
    let my = sy / n;
    let mut sxx = R::zero();
    let mut sxy = R::zero();
    let mut syy = R::zero();
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if sxx == R::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == R::zero() {
        R::one() // fit through constant data is exact
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Median of a slice; mean of the two middle values for even lengths.
/// Returns `None` for empty input.
pub fn median<R: Real>(values: &[R]) -> Option<R> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN values"));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / R::from_f64_const(2.0)
    })
}

/// Sample Pearson correlation coefficient via the two-pass centered formula.
/// Returns `None` when the lengths differ, fewer than two samples exist, or
/// either series has zero variance.
pub fn pearson<R: Real>(x: &[R], y: &[R]) -> Option<R> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = R::from_usize(x.len()).unwrap();
    let mut sx = R::zero();
    let mut sy = R::zero();
    for i in 0..x.len() {
        sx = sx + x[i];
        sy = sy + y[i];
    }
    let mx = sx / n;
    let my = sy / n;
    let mut sxy = R::zero();
    let mut sxx = R::zero();
    let mut syy = R::zero();
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == R::zero() || syy == R::zero() {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}
