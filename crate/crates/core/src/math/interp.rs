//! Interpolation and sub-grid extremum refinement.

use super::Real;

/// Linear interpolation between `(x0, y0)` and `(x1, y1)` at `x`.
/// Degenerates to `y0` when the abscissas coincide.
pub fn lerp<R: Real>(x0: R, y0: R, x1: R, y1: R, x: R) -> R {
    if x1 == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Resample a piecewise-linear function given by strictly increasing `xs`
/// onto the query points `grid` (each inside `[xs.first(), xs.last()]`).
pub fn resample_linear<R: Real>(xs: &[R], ys: &[R], grid: &[R]) -> Vec<R> {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "resampling needs at least two knots");
    let mut out = Vec::with_capacity(grid.len());
    let mut seg = 0usize;
    for &g in grid {
        while seg + 2 < xs.len() && xs[seg + 1] < g {
            seg += 1;
        }
        out.push(lerp(xs[seg], ys[seg], xs[seg + 1], ys[seg + 1], g));
    }
    out
}

/// Bilinear interpolation on a rectilinear grid with axes `xs` (len nx) and
/// `ys` (len ny) and values `v[ix][iy]`. Queries outside the axis hull are
/// clamped to the border.
pub fn bilinear<R: Real>(xs: &[R], ys: &[R], v: &[Vec<R>], x: R, y: R) -> R {
    let (i0, i1, tx) = bracket(xs, x);
    let (j0, j1, ty) = bracket(ys, y);
    let one = R::one();
    let a = v[i0][j0] * (one - tx) * (one - ty);
    let b = v[i1][j0] * tx * (one - ty);
    let c = v[i0][j1] * (one - tx) * ty;
    let d = v[i1][j1] * tx * ty;
    a + b + c + d
}

fn bracket<R: Real>(axis: &[R], q: R) -> (usize, usize, R) {
    let n = axis.len();
    if n == 1 || q <= axis[0] {
        return (0, 0, R::zero());
    }
    if q >= axis[n - 1] {
        return (n - 1, n - 1, R::zero());
    }
    let mut i = 0;
    while i + 2 < n && axis[i + 1] <= q {
        i += 1;
    }
    let t = (q - axis[i]) / (axis[i + 1] - axis[i]);
    (i, i + 1, t)
}

/// Sub-grid extremum from a parabola through a grid extremum and its two
/// neighbors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum<R> {
    pub x: R,
    pub y: R,
}

/// Refine the extremum at index `k` (0 < k < len-1) of `y` sampled at
/// `x0 + i*dx` by a parabolic fit through `y[k-1], y[k], y[k+1]`. Falls back
/// to the grid point when the three samples are collinear.
pub fn parabolic_refine<R: Real>(x0: R, dx: R, y: &[R], k: usize) -> Extremum<R> {
    debug_assert!(k > 0 && k + 1 < y.len());
    let half = R::from_f64_const(0.5);
    let quarter = R::from_f64_const(0.25);
    let denom = y[k - 1] - (y[k] + y[k]) + y[k + 1];
    let xk = x0 + R::from_usize(k).unwrap() * dx;
    if denom == R::zero() {
        return Extremum { x: xk, y: y[k] };
    }
    let mut delta = half * (y[k - 1] - y[k + 1]) / denom;
    // keep the vertex inside the central cell
    if delta > half {
        delta = half;
    } else if delta < -half {
        delta = -half;
    }
    let yv = y[k] - quarter * (y[k - 1] - y[k + 1]) * delta;
    Extremum {
        x: xk + delta * dx,
        y: yv,
    }
}
