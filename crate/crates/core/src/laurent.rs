//! Truncated two-sided Laurent series over ℂ.
//!
//! A [`LaurentWindow`] stores every coefficient `f_n` for `n` in the window
//! `[n_min, n_max]` of its [`NumericContext`]. Products are windowed Cauchy
//! convolutions; whatever falls outside the window is dropped and its
//! magnitude is accumulated as *spill mass*, which feeds the truncation
//! estimate reported by [`LaurentWindow::eval`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: i64 = 200;
pub const DEFAULT_TOL_REL: f64 = 1e-12;
pub const DEFAULT_TOL_ABS: f64 = 1e-300;

/// Global numeric parameters threaded through every computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericContext {
    q: Complex64,
    n_min: i64,
    n_max: i64,
    pub tol_rel: f64,
    pub tol_abs: f64,
}

impl NumericContext {
    pub fn new(q: Complex64, n_min: i64, n_max: i64, tol_rel: f64, tol_abs: f64) -> Result<Self> {
        if !(q.norm() > 1.0) || !q.is_finite() {
            return Err(Error::InvalidContext(format!("|q| must exceed 1, got q = {q}")));
        }
        if !(n_min < 0 && n_max > 0) {
            return Err(Error::InvalidContext(format!(
                "window must straddle 0, got [{n_min}, {n_max}]"
            )));
        }
        if n_max - n_min < 16 {
            return Err(Error::InvalidContext(format!(
                "window [{n_min}, {n_max}] is narrower than 16"
            )));
        }
        if !(tol_rel > 0.0) || !(tol_abs > 0.0) {
            return Err(Error::InvalidContext("tolerances must be positive".into()));
        }
        Ok(Self { q, n_min, n_max, tol_rel, tol_abs })
    }

    /// Default window `[-200, 200]` and default tolerances.
    pub fn with_q(q: Complex64) -> Result<Self> {
        Self::new(q, -DEFAULT_WINDOW, DEFAULT_WINDOW, DEFAULT_TOL_REL, DEFAULT_TOL_ABS)
    }

    pub fn real(q: f64) -> Result<Self> {
        Self::with_q(Complex64::new(q, 0.0))
    }

    pub fn q(&self) -> Complex64 {
        self.q
    }

    pub fn n_min(&self) -> i64 {
        self.n_min
    }

    pub fn n_max(&self) -> i64 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn contains(&self, n: i64) -> bool {
        (self.n_min..=self.n_max).contains(&n)
    }

    /// Same context with a different window.
    pub fn with_window(&self, n_min: i64, n_max: i64) -> Result<Self> {
        Self::new(self.q, n_min, n_max, self.tol_rel, self.tol_abs)
    }

    /// Same context with a different q (used for theta functions in q²).
    pub fn with_modulus(&self, q: Complex64) -> Result<Self> {
        Self::new(q, self.n_min, self.n_max, self.tol_rel, self.tol_abs)
    }

    pub fn log_abs_q(&self) -> f64 {
        self.q.norm().ln()
    }
}

/// A point evaluation together with an estimate of the error caused by the
/// finite window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: Complex64,
    pub truncation_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaurentWindow {
    ctx: NumericContext,
    coeffs: Vec<Complex64>,
    spill: f64,
}

impl LaurentWindow {
    pub fn zero(ctx: &NumericContext) -> Self {
        Self { ctx: *ctx, coeffs: vec![Complex64::new(0.0, 0.0); ctx.len()], spill: 0.0 }
    }

    pub fn constant(ctx: &NumericContext, c: Complex64) -> Self {
        Self::monomial(ctx, 0, c)
    }

    pub fn monomial(ctx: &NumericContext, n: i64, c: Complex64) -> Self {
        let mut w = Self::zero(ctx);
        if ctx.contains(n) {
            w.set(n, c);
        }
        w
    }

    /// Builds a window from consecutive coefficients starting at exponent `start`.
    /// Every supplied exponent must lie inside the window.
    pub fn from_coeffs(ctx: &NumericContext, start: i64, coeffs: &[Complex64]) -> Result<Self> {
        let mut w = Self::zero(ctx);
        for (k, &c) in coeffs.iter().enumerate() {
            let n = start + k as i64;
            if !ctx.contains(n) {
                if c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                return Err(Error::Dimension(format!(
                    "exponent {n} outside window [{}, {}]",
                    ctx.n_min(),
                    ctx.n_max()
                )));
            }
            w.set(n, c);
        }
        Ok(w)
    }

    pub fn from_real(ctx: &NumericContext, start: i64, coeffs: &[f64]) -> Result<Self> {
        let c: Vec<Complex64> = coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_coeffs(ctx, start, &c)
    }

    /// Fills the window from `f(n)`.
    pub fn from_fn(ctx: &NumericContext, mut f: impl FnMut(i64) -> Complex64) -> Self {
        let mut w = Self::zero(ctx);
        for n in ctx.n_min()..=ctx.n_max() {
            w.set(n, f(n));
        }
        w
    }

    pub fn context(&self) -> &NumericContext {
        &self.ctx
    }

    pub fn spill_mass(&self) -> f64 {
        self.spill
    }

    /// `[f]_n`; zero outside the window.
    pub fn coeff(&self, n: i64) -> Complex64 {
        if self.ctx.contains(n) {
            self.coeffs[(n - self.ctx.n_min()) as usize]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn set(&mut self, n: i64, c: Complex64) {
        assert!(self.ctx.contains(n), "exponent {n} outside window");
        let c = if c.norm() < self.ctx.tol_abs { Complex64::new(0.0, 0.0) } else { c };
        let i = (n - self.ctx.n_min()) as usize;
        self.coeffs[i] = c;
    }

    /// `(exponent, coefficient)` pairs over the whole window.
    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let n0 = self.ctx.n_min();
        self.coeffs.iter().enumerate().map(move |(k, &c)| (n0 + k as i64, c))
    }

    /// Smallest and largest exponents with a nonzero stored coefficient.
    pub fn support(&self) -> Option<(i64, i64)> {
        let lo = self.coeffs.iter().position(|c| *c != Complex64::new(0.0, 0.0))?;
        let hi = self.coeffs.iter().rposition(|c| *c != Complex64::new(0.0, 0.0))?;
        let n0 = self.ctx.n_min();
        Some((n0 + lo as i64, n0 + hi as i64))
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn is_numerically_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() <= self.ctx.tol_abs)
    }

    fn check_ctx(&self, other: &Self) -> Result<()> {
        if self.ctx != other.ctx {
            return Err(Error::ContextMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_ctx(other)?;
        let mut out = self.clone();
        for (k, c) in other.coeffs.iter().enumerate() {
            out.coeffs[k] += c;
        }
        out.flush();
        out.spill = self.spill + other.spill;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut() {
            *c *= s;
        }
        out.flush();
        out.spill = self.spill * s.norm();
        out
    }

    /// Windowed Cauchy product. Coefficients landing outside the window are
    /// dropped and counted in the spill mass of the result.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_ctx(other)?;
        let mut out = Self::zero(&self.ctx);
        let (Some((a0, a1)), Some((b0, b1))) = (self.support(), other.support()) else {
            out.spill = self.spill * other.max_abs() + other.spill * self.max_abs();
            return Ok(out);
        };
        let (lo, hi) = (self.ctx.n_min(), self.ctx.n_max());
        let mut spill = 0.0;
        for i in a0..=a1 {
            let fi = self.coeff(i);
            if fi == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in b0..=b1 {
                let gj = other.coeff(j);
                if gj == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let n = i + j;
                let p = fi * gj;
                if n < lo || n > hi {
                    spill += p.norm();
                } else {
                    out.coeffs[(n - lo) as usize] += p;
                }
            }
        }
        out.flush();
        out.spill = spill + self.spill * other.l1_norm() + other.spill * self.l1_norm();
        Ok(out)
    }

    /// Multiplication by `z^k`; coefficients shifted out of the window spill.
    pub fn shift(&self, k: i64) -> Self {
        let mut out = Self::zero(&self.ctx);
        let mut spill = self.spill;
        for (n, c) in self.iter() {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            if self.ctx.contains(n + k) {
                out.coeffs[(n + k - self.ctx.n_min()) as usize] = c;
            } else {
                spill += c.norm();
            }
        }
        out.spill = spill;
        out
    }

    /// The dilation `(σ_q f)(z) = f(qz)`: coefficient `n` becomes `qⁿ f_n`.
    pub fn sigma(&self) -> Self {
        let q = self.ctx.q();
        let mut out = self.clone();
        for (k, c) in out.coeffs.iter_mut().enumerate() {
            if *c != Complex64::new(0.0, 0.0) {
                let n = self.ctx.n_min() + k as i64;
                *c *= q.powi(n as i32);
            }
        }
        out.flush();
        out
    }

    /// `Σ f_n z0ⁿ` with a truncation estimate built from the outermost
    /// coefficients and the accumulated spill mass.
    pub fn eval(&self, z0: Complex64) -> Result<Evaluation> {
        if z0 == Complex64::new(0.0, 0.0) {
            return Err(Error::ZeroArgument("z0"));
        }
        let lo = self.ctx.n_min();
        let hi = self.ctx.n_max();
        // Horner on the nonnegative part in z and on the negative part in 1/z.
        let mut pos = Complex64::new(0.0, 0.0);
        for n in (0..=hi).rev() {
            pos = pos * z0 + self.coeff(n);
        }
        let w = z0.inv();
        let mut neg = Complex64::new(0.0, 0.0);
        for k in (1..=-lo).rev() {
            neg = neg * w + self.coeff(-k);
        }
        let neg = neg * w;
        let r = z0.norm();
        let mut err = 0.0;
        for k in 0..3 {
            err += term_bound(self.coeff(hi - k).norm(), r, hi - k);
            err += term_bound(self.coeff(lo + k).norm(), r, lo + k);
        }
        if self.spill > 0.0 {
            err += self.spill * r.powf(hi as f64 + 1.0).max(r.powf(lo as f64 - 1.0));
        }
        Ok(Evaluation { value: pos + neg, truncation_error: err })
    }

    /// Smallest exponent whose coefficient exceeds `tol_abs`.
    pub fn valuation(&self) -> Result<i64> {
        self.iter()
            .find(|(_, c)| c.norm() > self.ctx.tol_abs)
            .map(|(n, _)| n)
            .ok_or(Error::NumericallyZero)
    }

    /// Both ends of the window are below `tol_abs` over their outer 10%.
    pub fn is_decaying_at_both_ends(&self) -> bool {
        let len = self.coeffs.len();
        let band = (len / 10).max(1);
        let tol = self.ctx.tol_abs;
        self.coeffs[..band].iter().all(|c| c.norm() < tol)
            && self.coeffs[len - band..].iter().all(|c| c.norm() < tol)
    }

    /// Re-homes the coefficients into another context (same q), spilling
    /// whatever no longer fits.
    pub fn rewindow(&self, ctx: &NumericContext) -> Result<Self> {
        if ctx.q() != self.ctx.q() {
            return Err(Error::ContextMismatch);
        }
        let mut out = Self::zero(ctx);
        let mut spill = self.spill;
        for (n, c) in self.iter() {
            if ctx.contains(n) {
                out.set(n, c);
            } else {
                spill += c.norm();
            }
        }
        out.spill = spill;
        Ok(out)
    }

    fn flush(&mut self) {
        let tol = self.ctx.tol_abs;
        for c in self.coeffs.iter_mut() {
            if c.norm() < tol {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    pub fn to_json(&self) -> LaurentJson {
        match self.support() {
            None => LaurentJson { n_min: 0, coeffs: vec![] },
            Some((a, b)) => LaurentJson { n_min: a, coeffs: (a..=b).map(|n| self.coeff(n)).collect() },
        }
    }
}

fn term_bound(c: f64, r: f64, n: i64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * r.powi(n as i32)
    }
}

/// Wire form `{"n_min": int, "coeffs": [[re, im], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaurentJson {
    pub n_min: i64,
    pub coeffs: Vec<Complex64>,
}

impl LaurentJson {
    pub fn into_window(&self, ctx: &NumericContext) -> Result<LaurentWindow> {
        LaurentWindow::from_coeffs(ctx, self.n_min, &self.coeffs)
    }
}
