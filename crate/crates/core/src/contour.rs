//! Trapezoid quadrature on circles.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::Result;

/// `(1/2πi) ∮ f(z) dz/z` over the circle `|z − center| = radius`, with `n`
/// equispaced nodes. Vector valued; all evaluations must return the same length.
pub fn residue_dz_over_z(
    f: impl Fn(Complex64) -> Result<Vec<Complex64>>,
    center: Complex64,
    radius: f64,
    n: usize,
) -> Result<Vec<Complex64>> {
    let mut acc: Vec<Complex64> = Vec::new();
    for k in 0..n {
        let e = Complex64::from_polar(radius, TAU * k as f64 / n as f64);
        let z = center + e;
        let v = f(z)?;
        let w = e / z;
        if acc.is_empty() {
            acc = vec![Complex64::new(0.0, 0.0); v.len()];
        }
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x * w;
        }
    }
    let s = 1.0 / n as f64;
    Ok(acc.into_iter().map(|a| a * s).collect())
}

pub fn scalar_residue_dz_over_z(
    f: impl Fn(Complex64) -> Result<Complex64>,
    center: Complex64,
    radius: f64,
    n: usize,
) -> Result<Complex64> {
    Ok(residue_dz_over_z(|z| Ok(vec![f(z)?]), center, radius, n)?[0])
}
