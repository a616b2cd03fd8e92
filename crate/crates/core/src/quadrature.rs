//! Cumulative quadrature on uniform grids, for real or complex samples.

use std::ops::{Add, Mul, Sub};

pub trait Sample: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl Sample for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Sample for num_complex::Complex64 {
    fn zero() -> Self {
        num_complex::Complex64::new(0.0, 0.0)
    }
}

/// `out[k] ≈ ∫_{s_0}^{s_k} f` by composite Simpson on even nodes and a
/// three-point quadratic correction on odd nodes.
pub fn cumulative_simpson<T: Sample>(f: &[T], h: f64) -> Vec<T> {
    let n = f.len();
    let mut out = vec![T::zero(); n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = (f[0] + f[1]) * (0.5 * h);
        return out;
    }
    // ∫ over the first interval from the quadratic through f0, f1, f2.
    out[1] = (f[0] * 5.0 + f[1] * 8.0 - f[2]) * (h / 12.0);
    for k in 2..n {
        out[k] = if k % 2 == 0 {
            out[k - 2] + (f[k - 2] + f[k - 1] * 4.0 + f[k]) * (h / 3.0)
        } else {
            out[k - 1] + (f[k] * 5.0 + f[k - 1] * 8.0 - f[k - 2]) * (h / 12.0)
        };
    }
    out
}

/// `out[k] = ∫_{s_0}^{s_k} f` by the trapezoidal rule.
pub fn cumulative_trapezoid<T: Sample>(f: &[T], h: f64) -> Vec<T> {
    let mut out = vec![T::zero(); f.len()];
    for k in 1..f.len() {
        out[k] = out[k - 1] + (f[k - 1] + f[k]) * (0.5 * h);
    }
    out
}
