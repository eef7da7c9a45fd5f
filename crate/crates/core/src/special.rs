//! Jacobi theta function `θ_q(z) = Σ q^{-n(n+1)/2} zⁿ`, its triple-product
//! form, the q-characters `e_{q,a}`, the coefficient family of `θ_q^d`, and
//! the matrix-argument theta `T_B(z) = Σ t_n B^{-n} zⁿ`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::laurent::{LaurentWindow, NumericContext};
use crate::linalg::{self, CMat, ZERO};

/// Terms or factors closer than this (relatively) to their limit are dropped.
const SERIES_EPS: f64 = 1e-18;
const MAX_TERMS: usize = 100_000;

/// Pole threshold for `e_{q,a}`, relative to the numerator.
pub const POLE_REL: f64 = 1e-12;

/// `θ_q(z)` by direct summation of the Laurent series at the representative
/// `w = q^{-k}z` with `1 ≤ |w| < |q|`, then `θ_q(q^k w) = q^{k(k−1)/2} w^k θ_q(w)`.
pub fn theta_series(q: Complex64, z: Complex64) -> Result<Complex64> {
    if z == ZERO {
        return Err(Error::ZeroArgument("z"));
    }
    if !(q.norm() > 1.0) {
        return Err(Error::InvalidContext("|q| must exceed 1".into()));
    }
    let k = (z.norm().ln() / q.norm().ln()).floor() as i32;
    if k == 0 {
        return theta_annulus(q, z);
    }
    let w = z * q.powi(-k);
    let e = k as i64 * (k as i64 - 1) / 2;
    let factor = q.powi(e as i32) * w.powi(k);
    Ok(factor * theta_annulus(q, w)?)
}

fn theta_annulus(q: Complex64, z: Complex64) -> Result<Complex64> {
    let zn = z.norm();
    let qn = q.norm();
    let qinv = q.inv();
    let mut sum = Complex64::new(1.0, 0.0);
    let mut biggest: f64 = 1.0;

    // n >= 0: t_{n+1} = t_n · z · q^{-(n+1)}
    let mut term = Complex64::new(1.0, 0.0);
    let mut qpow = Complex64::new(1.0, 0.0);
    for n in 0..MAX_TERMS {
        qpow *= qinv;
        term *= z * qpow;
        sum += term;
        let t = term.norm();
        biggest = biggest.max(t);
        let past_peak = zn < qn.powi(n as i32 + 1);
        if t == 0.0 || (past_peak && t <= SERIES_EPS * biggest) {
            break;
        }
    }

    // n = -1: 1/z; then t_{-(m+1)} = t_{-m} · q^{-m} / z
    let zinv = z.inv();
    let mut term = zinv;
    sum += term;
    biggest = biggest.max(term.norm());
    let mut qpow = Complex64::new(1.0, 0.0);
    for m in 1..MAX_TERMS {
        qpow *= qinv;
        term *= qpow * zinv;
        sum += term;
        let t = term.norm();
        biggest = biggest.max(t);
        let past_peak = zn * qn.powi(m as i32) > 1.0;
        if t == 0.0 || (past_peak && t <= SERIES_EPS * biggest) {
            break;
        }
    }
    Ok(sum)
}

/// `θ_q(z)` from the Jacobi triple product
/// `Π_{n≥1}(1 − q^{-n}) Π_{n≥1}(1 + q^{-n}z) Π_{n≥0}(1 + q^{-n}z^{-1})`.
pub fn theta_triple(q: Complex64, z: Complex64) -> Result<Complex64> {
    if z == ZERO {
        return Err(Error::ZeroArgument("z"));
    }
    let zinv = z.inv();
    let reach = z.norm().max(zinv.norm()).max(1.0);
    let qinv = q.inv();
    let one = Complex64::new(1.0, 0.0);
    let mut prod = one + zinv;
    let mut qpow = one;
    for _ in 1..MAX_TERMS {
        qpow *= qinv;
        prod *= (one - qpow) * (one + qpow * z) * (one + qpow * zinv);
        if qpow.norm() * reach < SERIES_EPS {
            break;
        }
    }
    Ok(prod)
}

/// `θ_{q,a}(z) = θ_q(z/a)`.
pub fn theta_a(q: Complex64, z: Complex64, a: Complex64) -> Result<Complex64> {
    if a == ZERO {
        return Err(Error::ZeroArgument("a"));
    }
    theta_series(q, z / a)
}

/// The q-character `e_{q,a} = θ_q / θ_{q,a}`, which satisfies
/// `e_{q,a}(qz) = a·e_{q,a}(z)`.
pub fn e_qa(q: Complex64, z: Complex64, a: Complex64) -> Result<Complex64> {
    let num = theta_series(q, z)?;
    let den = theta_a(q, z, a)?;
    if den == ZERO || den.norm() < POLE_REL * num.norm() {
        return Err(Error::Pole { z });
    }
    Ok(num / den)
}

/// Laurent coefficients `t_n` of `θ_q^d`. They satisfy `qⁿ t_n = t_{n-d}`.
#[derive(Debug, Clone)]
pub struct ThetaFamily {
    pub d: u32,
    coeffs: LaurentWindow,
}

impl ThetaFamily {
    pub fn t(&self, n: i64) -> Complex64 {
        self.coeffs.coeff(n)
    }

    pub fn window(&self) -> &LaurentWindow {
        &self.coeffs
    }

    pub fn context(&self) -> &NumericContext {
        self.coeffs.context()
    }
}

/// `θ_q` as a window: `t_n = q^{-n(n+1)/2}`.
pub fn theta_window(ctx: &NumericContext) -> LaurentWindow {
    let qinv = ctx.q().inv();
    let mut w = LaurentWindow::zero(ctx);
    let mut t = Complex64::new(1.0, 0.0);
    w.set(0, t);
    for n in 1..=ctx.n_max() {
        t *= qinv.powi(n as i32);
        w.set(n, t);
    }
    let mut t = Complex64::new(1.0, 0.0);
    w.set(-1, t);
    for m in 1..-ctx.n_min() {
        t *= qinv.powi(m as i32);
        w.set(-(m + 1), t);
    }
    w
}

/// `θ_q^d` by repeated windowed convolution.
pub fn t_coeffs(ctx: &NumericContext, d: u32) -> Result<ThetaFamily> {
    if d == 0 {
        return Err(Error::Unsupported("theta power d must be at least 1".into()));
    }
    let base = theta_window(ctx);
    let mut acc = base.clone();
    for _ in 1..d {
        acc = acc.mul(&base)?;
    }
    Ok(ThetaFamily { d, coeffs: acc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerMethod {
    Eigen,
    RepeatedSolve,
}

#[derive(Debug, Clone)]
pub struct ThetaMatrix {
    pub value: CMat,
    pub method: PowerMethod,
}

/// `T_B(z) = Σ t_n B^{-n} zⁿ = θ_q^d(B^{-1} z)`, which satisfies
/// `T_B(qz) = T_B(z) z^d A^{-1}` for `A = B^d`.
pub fn theta_matrix(ctx: &NumericContext, b: &CMat, d: u32, z: Complex64) -> Result<ThetaMatrix> {
    if !b.is_square() {
        return Err(Error::Dimension("theta matrix needs a square B".into()));
    }
    if z == ZERO {
        return Err(Error::ZeroArgument("z"));
    }
    if linalg::condition_number(b) > 1e14 {
        return Err(Error::Singular("B".into()));
    }
    if let Ok(eig) = linalg::eigen(b) {
        let mut vals = Vec::with_capacity(eig.values.len());
        for &bi in &eig.values {
            vals.push(theta_series(ctx.q(), z / bi)?.powu(d));
        }
        let value = &eig.vectors * linalg::diag(&vals) * &eig.vectors_inv;
        return Ok(ThetaMatrix { value, method: PowerMethod::Eigen });
    }
    theta_matrix_by_powers(ctx, b, d, z)
}

fn theta_matrix_by_powers(ctx: &NumericContext, b: &CMat, d: u32, z: Complex64) -> Result<ThetaMatrix> {
    let fam = t_coeffs(ctx, d)?;
    let r = b.nrows();
    let lu = b.clone().lu();
    let mut sum = CMat::zeros(r, r);
    let mut add_side = |sign: i64| -> Result<()> {
        // sign = +1: n = 0, 1, ...; sign = -1: n = -1, -2, ...
        let mut power = linalg::identity(r);
        let mut zpow = Complex64::new(1.0, 0.0);
        let mut n = 0i64;
        if sign < 0 {
            power = b.clone();
            zpow = z.inv();
            n = -1;
        }
        let mut converged = false;
        let mut quiet = 0;
        while ctx.contains(n) {
            let term = &power * (fam.t(n) * zpow);
            let tn = linalg::max_abs(&term);
            sum += &term;
            if tn <= SERIES_EPS * linalg::max_abs(&sum).max(1e-300) {
                quiet += 1;
                if quiet >= 3 {
                    converged = true;
                    break;
                }
            } else {
                quiet = 0;
            }
            if sign > 0 {
                power = lu.solve(&power).ok_or_else(|| Error::Singular("B".into()))?;
                zpow *= z;
                n += 1;
            } else {
                power = &power * b;
                zpow /= z;
                n -= 1;
            }
        }
        if converged {
            Ok(())
        } else {
            Err(Error::Divergence("theta matrix terms do not decay inside the window".into()))
        }
    };
    add_side(1)?;
    add_side(-1)?;
    Ok(ThetaMatrix { value: sum, method: PowerMethod::RepeatedSolve })
}

/// One row of `T_B(z)`.
pub fn theta_matrix_row(ctx: &NumericContext, b: &CMat, d: u32, row: usize, z: Complex64) -> Result<Vec<Complex64>> {
    if row >= b.nrows() {
        return Err(Error::Dimension(format!("row {row} of a {}x{} matrix", b.nrows(), b.ncols())));
    }
    let t = theta_matrix(ctx, b, d, z)?;
    Ok(t.value.row(row).iter().cloned().collect())
}
