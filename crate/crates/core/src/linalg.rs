//! Small dense complex linear algebra on top of `nalgebra`: eigendecomposition
//! through the complex Schur form, conditioning, Sylvester solves.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigenvector conditioning bound above which a matrix is treated as
/// non-diagonalizable.
pub const EIG_COND_MAX: f64 = 1e8;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn diag(values: &[Complex64]) -> CMat {
    CMat::from_diagonal(&CVec::from_column_slice(values))
}

/// Parses a row-major list of rows.
pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<CMat> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(CMat::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn to_rows(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Largest singular value over smallest; `inf` for singular input.
pub fn condition_number(m: &CMat) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    if !m.is_square() {
        return Err(Error::Dimension("inverse of a non-square matrix".into()));
    }
    if condition_number(m) > 1e14 {
        return Err(Error::Singular(format!("condition number {:.3e}", condition_number(m))));
    }
    m.clone().try_inverse().ok_or_else(|| Error::Singular("LU failed".into()))
}

/// Eigendecomposition `A = V diag(λ) V⁻¹` with unit-norm eigenvector columns,
/// eigenvalues ordered by argument and then by modulus.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<Complex64>,
    pub vectors: CMat,
    pub vectors_inv: CMat,
    pub condition: f64,
}

impl Eigen {
    /// `V diag(f(λ_i)) V⁻¹`.
    pub fn apply(&self, f: impl Fn(Complex64) -> Complex64) -> CMat {
        let d: Vec<Complex64> = self.values.iter().map(|&l| f(l)).collect();
        &self.vectors * diag(&d) * &self.vectors_inv
    }
}

pub fn eigenvalues(a: &CMat) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Unsupported("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let mut v: Vec<Complex64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    sort_spectrum(&mut v);
    Ok(v)
}

fn spectrum_key(z: &Complex64) -> (f64, f64) {
    // round the argument so that conjugation noise does not reorder equal values
    let arg = (z.arg() * 1e10).round() / 1e10;
    (arg, z.norm())
}

fn sort_spectrum(v: &mut [Complex64]) {
    v.sort_by(|a, b| spectrum_key(a).partial_cmp(&spectrum_key(b)).unwrap());
}

/// Eigendecomposition of a diagonalizable matrix; `Unsupported` when the
/// eigenvector matrix is worse conditioned than `EIG_COND_MAX`.
pub fn eigen(a: &CMat) -> Result<Eigen> {
    if !a.is_square() {
        return Err(Error::Dimension("eigendecomposition of a non-square matrix".into()));
    }
    let n = a.nrows();
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Unsupported("Schur iteration did not converge".into()))?;
    let (qm, t) = schur.unpack();
    let scale = spectral_norm(&t).max(f64::MIN_POSITIVE);
    let mut pairs: Vec<(Complex64, CVec)> = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let mut y = CVec::zeros(n);
        y[k] = ONE;
        for j in (0..k).rev() {
            let mut s = ZERO;
            for l in j + 1..=k {
                s += t[(j, l)] * y[l];
            }
            let den = t[(j, j)] - lambda;
            if den.norm() <= 1e-13 * scale {
                if s.norm() <= 1e-10 * scale {
                    y[j] = ZERO;
                } else {
                    return Err(Error::Unsupported("matrix is not diagonalizable".into()));
                }
            } else {
                y[j] = -s / den;
            }
        }
        let mut v = &qm * y;
        let nv = v.norm();
        v /= Complex64::new(nv, 0.0);
        pairs.push((lambda, v));
    }
    pairs.sort_by(|a, b| spectrum_key(&a.0).partial_cmp(&spectrum_key(&b.0)).unwrap());
    let values: Vec<Complex64> = pairs.iter().map(|p| p.0).collect();
    let vectors = CMat::from_columns(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
    let condition = condition_number(&vectors);
    if !(condition < EIG_COND_MAX) {
        return Err(Error::Unsupported(format!(
            "matrix is not diagonalizable within conditioning bound (cond {condition:.3e})"
        )));
    }
    let vectors_inv = inverse(&vectors)?;
    Ok(Eigen { values, vectors, vectors_inv, condition })
}

/// Solves `s·X·B − A·X = R` for `X` by vectorization.
pub fn solve_sylvester_scaled(s: Complex64, a: &CMat, b: &CMat, r: &CMat) -> Result<CMat> {
    let (m, n) = (a.nrows(), b.nrows());
    if r.nrows() != m || r.ncols() != n {
        return Err(Error::Dimension("Sylvester right-hand side".into()));
    }
    // vec(X B) = (Bᵀ ⊗ I) vec X, vec(A X) = (I ⊗ A) vec X
    let big = b.transpose().kronecker(&identity(m)) * s - identity(n).kronecker(a);
    let rhs = CVec::from_iterator(m * n, r.iter().cloned());
    let lu = big.lu();
    let x = lu.solve(&rhs).ok_or_else(|| Error::Singular("Sylvester operator".into()))?;
    Ok(CMat::from_iterator(m, n, x.iter().cloned()))
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}
