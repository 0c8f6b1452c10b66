//! Discrete Gaussian smoothing on uniform grids.

use super::Real;

/// Normalized Gaussian kernel sampled at grid spacing `dx`, truncated at
/// ±4σ. Returns the half-width `k` and the weights `w[-k..=k]` flattened to
/// length `2k + 1`. A sigma too small to reach the first neighbor yields the
/// identity kernel (`k == 0`).
pub fn gaussian_kernel<R: Real>(dx: R, sigma: R) -> (usize, Vec<R>) {
    let four = R::from_f64_const(4.0);
    if sigma <= R::zero() {
        return (0, vec![R::one()]);
    }
    let k = (four * sigma / dx).floor().to_usize().unwrap_or(0);
    if k == 0 {
        return (0, vec![R::one()]);
    }
    let half = R::from_f64_const(0.5);
    let mut w = Vec::with_capacity(2 * k + 1);
    let mut sum = R::zero();
    for j in -(k as isize)..=(k as isize) {
        let x = R::from_isize(j).unwrap() * dx / sigma;
        let v = (-half * x * x).exp();
        sum = sum + v;
        w.push(v);
    }
    for v in &mut w {
        *v = *v / sum;
    }
    (k, w)
}

/// Convolve `y` (sampled on a uniform grid with spacing `dx`) with a
/// Gaussian of standard deviation `sigma`, using reflection padding at the
/// edges. Output length equals input length.
pub fn gaussian_smooth<R: Real>(y: &[R], dx: R, sigma: R) -> Vec<R> {
    let (k, w) = gaussian_kernel(dx, sigma);
    if k == 0 || y.len() < 2 {
        return y.to_vec();
    }
    let n = y.len() as isize;
    let reflect = |i: isize| -> usize {
        // mirror about the end points without repeating them
        let mut i = i;
        loop {
            if i < 0 {
                i = -i;
            } else if i >= n {
                i = 2 * (n - 1) - i;
            } else {
                return i as usize;
            }
        }
    };
    let mut out = Vec::with_capacity(y.len());
    for i in 0..n {
        let mut acc = R::zero();
        for (j, wj) in w.iter().enumerate() {
            let idx = reflect(i + j as isize - k as isize);
            acc = acc + *wj * y[idx];
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_sigma_is_identity() {
        let y = vec![1.0, 5.0, 2.0, 8.0];
        assert_eq!(gaussian_smooth(&y, 1.0, 0.1), y);
        assert_eq!(gaussian_smooth(&y, 1.0, 0.0), y);
    }

    #[test]
    fn impulse_reproduces_kernel_and_preserves_mass() {
        let n = 101;
        let mut y = vec![0.0f64; n];
        y[50] = 1.0;
        let sigma = 3.0;
        let out = gaussian_smooth(&y, 1.0, sigma);
        let (k, w) = gaussian_kernel(1.0, sigma);
        for j in 0..w.len() {
            let idx = 50 - k + j;
            assert!((out[idx] - w[j]).abs() < 1e-15);
        }
        let sum: f64 = out.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reflection_keeps_constant_signal_constant() {
        let y = vec![3.25f64; 40];
        let out = gaussian_smooth(&y, 1.0, 4.0);
        for v in out {
            assert!((v - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn works_at_f32() {
        let y: Vec<f32> = (0..32).map(|i| (i as f32 * 0.3).sin()).collect();
        let out = gaussian_smooth(&y, 1.0f32, 2.0f32);
        assert_eq!(out.len(), y.len());
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
