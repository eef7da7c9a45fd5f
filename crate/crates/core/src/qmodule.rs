//! q-difference modules in matrix form `σ_q X = A X`.
//!
//! Matrices of Laurent series are stored as [`MatrixWindow`]s (a Laurent
//! series with matrix coefficients). The gauge action is
//! `F[A] = (σ_q F) A F^{-1}`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laurent::{LaurentJson, LaurentWindow, NumericContext};
use crate::linalg::{self, CMat, CVec, ZERO};
use crate::special;

/// Laurent series with `rows × cols` matrix coefficients over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixWindow {
    ctx: NumericContext,
    rows: usize,
    cols: usize,
    coeffs: Vec<CMat>,
}

impl MatrixWindow {
    pub fn zero(ctx: &NumericContext, rows: usize, cols: usize) -> Self {
        Self { ctx: *ctx, rows, cols, coeffs: vec![CMat::zeros(rows, cols); ctx.len()] }
    }

    pub fn constant(ctx: &NumericContext, m: &CMat) -> Self {
        let mut w = Self::zero(ctx, m.nrows(), m.ncols());
        w.set(0, m.clone());
        w
    }

    pub fn identity(ctx: &NumericContext, n: usize) -> Self {
        Self::constant(ctx, &linalg::identity(n))
    }

    /// `Σ_k terms[k].1 · z^{terms[k].0}`.
    pub fn from_terms(ctx: &NumericContext, terms: &[(i64, CMat)]) -> Result<Self> {
        let (rows, cols) = terms
            .first()
            .map(|t| (t.1.nrows(), t.1.ncols()))
            .ok_or_else(|| Error::Dimension("no terms".into()))?;
        let mut w = Self::zero(ctx, rows, cols);
        for (n, m) in terms {
            if m.nrows() != rows || m.ncols() != cols {
                return Err(Error::Dimension("term shapes differ".into()));
            }
            if !ctx.contains(*n) {
                return Err(Error::Dimension(format!("exponent {n} outside window")));
            }
            let cur = w.coeff(*n) + m;
            w.set(*n, cur);
        }
        Ok(w)
    }

    pub fn from_entries(entries: &[Vec<LaurentWindow>]) -> Result<Self> {
        let rows = entries.len();
        let cols = entries.first().map_or(0, |r| r.len());
        if rows == 0 || cols == 0 || entries.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged or empty entry matrix".into()));
        }
        let ctx = *entries[0][0].context();
        if entries.iter().flatten().any(|e| *e.context() != ctx) {
            return Err(Error::ContextMismatch);
        }
        let mut w = Self::zero(&ctx, rows, cols);
        for n in ctx.n_min()..=ctx.n_max() {
            w.set(n, CMat::from_fn(rows, cols, |i, j| entries[i][j].coeff(n)));
        }
        Ok(w)
    }

    pub fn entry(&self, i: usize, j: usize) -> LaurentWindow {
        LaurentWindow::from_fn(&self.ctx, |n| self.coeff(n)[(i, j)])
    }

    pub fn context(&self) -> &NumericContext {
        &self.ctx
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn coeff(&self, n: i64) -> CMat {
        if self.ctx.contains(n) {
            self.coeffs[(n - self.ctx.n_min()) as usize].clone()
        } else {
            CMat::zeros(self.rows, self.cols)
        }
    }

    fn coeff_ref(&self, n: i64) -> Option<&CMat> {
        if self.ctx.contains(n) {
            Some(&self.coeffs[(n - self.ctx.n_min()) as usize])
        } else {
            None
        }
    }

    pub fn set(&mut self, n: i64, mut m: CMat) {
        assert!(self.ctx.contains(n), "exponent {n} outside window");
        let tol = self.ctx.tol_abs;
        for z in m.iter_mut() {
            if z.norm() < tol {
                *z = ZERO;
            }
        }
        let i = (n - self.ctx.n_min()) as usize;
        self.coeffs[i] = m;
    }

    fn is_zero_at(&self, n: i64) -> bool {
        self.coeff_ref(n).is_none_or(|m| m.iter().all(|z| *z == ZERO))
    }

    pub fn support(&self) -> Option<(i64, i64)> {
        let lo = (self.ctx.n_min()..=self.ctx.n_max()).find(|&n| !self.is_zero_at(n))?;
        let hi = (self.ctx.n_min()..=self.ctx.n_max()).rev().find(|&n| !self.is_zero_at(n))?;
        Some((lo, hi))
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(linalg::max_abs).fold(0.0, f64::max)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.ctx != other.ctx {
            return Err(Error::ContextMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        if self.shape() != other.shape() {
            return Err(Error::Dimension("matrix window shapes differ".into()));
        }
        let mut out = self.clone();
        for (k, m) in other.coeffs.iter().enumerate() {
            out.coeffs[k] += m;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        for m in out.coeffs.iter_mut() {
            *m *= s;
        }
        out
    }

    /// Windowed Cauchy product of matrix series.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        if self.cols != other.rows {
            return Err(Error::Dimension("matrix window product shapes".into()));
        }
        let mut out = Self::zero(&self.ctx, self.rows, other.cols);
        let (Some((a0, a1)), Some((b0, b1))) = (self.support(), other.support()) else {
            return Ok(out);
        };
        for i in a0..=a1 {
            if self.is_zero_at(i) {
                continue;
            }
            let fi = self.coeff_ref(i).unwrap();
            for j in b0..=b1 {
                let n = i + j;
                if !self.ctx.contains(n) || other.is_zero_at(j) {
                    continue;
                }
                let k = (n - self.ctx.n_min()) as usize;
                out.coeffs[k] += fi * other.coeff_ref(j).unwrap();
            }
        }
        let tol = self.ctx.tol_abs;
        for m in out.coeffs.iter_mut() {
            for z in m.iter_mut() {
                if z.norm() < tol {
                    *z = ZERO;
                }
            }
        }
        Ok(out)
    }

    /// Left multiplication by a constant matrix.
    pub fn left_mul_const(&self, m: &CMat) -> Self {
        let mut out = Self::zero(&self.ctx, m.nrows(), self.cols);
        for (k, c) in self.coeffs.iter().enumerate() {
            out.coeffs[k] = m * c;
        }
        out
    }

    pub fn right_mul_const(&self, m: &CMat) -> Self {
        let mut out = Self::zero(&self.ctx, self.rows, m.ncols());
        for (k, c) in self.coeffs.iter().enumerate() {
            out.coeffs[k] = c * m;
        }
        out
    }

    /// `z^k ·`
    pub fn shift(&self, k: i64) -> Self {
        let mut out = Self::zero(&self.ctx, self.rows, self.cols);
        for n in self.ctx.n_min()..=self.ctx.n_max() {
            if self.ctx.contains(n + k) && !self.is_zero_at(n) {
                out.set(n + k, self.coeff(n));
            }
        }
        out
    }

    pub fn sigma(&self) -> Self {
        let q = self.ctx.q();
        let mut out = self.clone();
        for n in self.ctx.n_min()..=self.ctx.n_max() {
            if !self.is_zero_at(n) {
                let k = (n - self.ctx.n_min()) as usize;
                out.coeffs[k] *= q.powi(n as i32);
            }
        }
        out
    }

    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        if z == ZERO {
            return Err(Error::ZeroArgument("z"));
        }
        let mut pos = CMat::zeros(self.rows, self.cols);
        for n in (0..=self.ctx.n_max()).rev() {
            pos = pos * z + self.coeff(n);
        }
        let w = z.inv();
        let mut neg = CMat::zeros(self.rows, self.cols);
        for k in (1..=-self.ctx.n_min()).rev() {
            neg = neg * w + self.coeff(-k);
        }
        Ok(pos + neg * w)
    }

    /// True when every coefficient of negative degree vanishes.
    pub fn is_power_series(&self) -> bool {
        (self.ctx.n_min()..0).all(|n| self.is_zero_at(n))
    }

    /// Inverse as a Laurent series on the circle `|z| = 1`.
    ///
    /// When the lowest coefficient is invertible the inverse is first tried as
    /// `z^{-v}` times a power series (one linear solve per degree); if that
    /// expansion does not decay inside the window, the inverse is computed by
    /// sampling on the unit circle and transforming back.
    pub fn inverse(&self) -> Result<Self> {
        if self.rows != self.cols {
            return Err(Error::Dimension("inverse of a non-square matrix window".into()));
        }
        let (v, _) = self.support().ok_or_else(|| Error::Singular("zero matrix window".into()))?;
        let lead = self.coeff(v);
        if linalg::condition_number(&lead) < 1e12 {
            if let Some(inv) = self.series_inverse(v, &lead)? {
                return Ok(inv);
            }
        }
        self.circle_inverse()
    }

    fn series_inverse(&self, v: i64, lead: &CMat) -> Result<Option<Self>> {
        let n = self.rows;
        let lead_inv = linalg::inverse(lead)?;
        let top = self.ctx.n_max() + v;
        if top < 0 {
            return Ok(None);
        }
        let mut h: Vec<CMat> = Vec::with_capacity(top as usize + 1);
        h.push(lead_inv.clone());
        for k in 1..=top {
            let mut acc = CMat::zeros(n, n);
            for j in 1..=k {
                if let Some(fj) = self.coeff_ref(v + j) {
                    if fj.iter().any(|z| *z != ZERO) {
                        acc += fj * &h[(k - j) as usize];
                    }
                }
            }
            h.push(-(&lead_inv * acc));
        }
        let len = h.len();
        let band = (len / 10).max(1);
        let peak = h.iter().map(linalg::max_abs).fold(0.0, f64::max);
        let tail = h[len - band..].iter().map(linalg::max_abs).fold(0.0, f64::max);
        if !(tail <= 1e-10 * peak) || !peak.is_finite() {
            return Ok(None);
        }
        let mut out = Self::zero(&self.ctx, n, n);
        for (k, m) in h.into_iter().enumerate() {
            let e = k as i64 - v;
            if self.ctx.contains(e) {
                out.set(e, m);
            }
        }
        Ok(Some(out))
    }

    fn circle_inverse(&self) -> Result<Self> {
        let n = self.rows;
        let len = self.ctx.len();
        let big = (2 * len).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_inverse(big);
        let bwd = planner.plan_fft_forward(big);
        // values F(ω^k) = Σ F_n ω^{kn}
        let mut samples: Vec<CMat> = vec![CMat::zeros(n, n); big];
        for i in 0..n {
            for j in 0..n {
                let mut buf = vec![ZERO; big];
                for m in self.ctx.n_min()..=self.ctx.n_max() {
                    buf[m.rem_euclid(big as i64) as usize] += self.coeffs[(m - self.ctx.n_min()) as usize][(i, j)];
                }
                fwd.process(&mut buf);
                for (k, v) in buf.into_iter().enumerate() {
                    samples[k][(i, j)] = v;
                }
            }
        }
        let mut inv_samples = Vec::with_capacity(big);
        for s in &samples {
            let cond = linalg::condition_number(s);
            if !(cond < 1e12) {
                return Err(Error::Singular("matrix window is not invertible on |z| = 1".into()));
            }
            inv_samples.push(linalg::inverse(s)?);
        }
        let mut out = Self::zero(&self.ctx, n, n);
        let scale = Complex64::new(1.0 / big as f64, 0.0);
        for i in 0..n {
            for j in 0..n {
                let mut buf: Vec<Complex64> = inv_samples.iter().map(|m| m[(i, j)]).collect();
                bwd.process(&mut buf);
                for m in self.ctx.n_min()..=self.ctx.n_max() {
                    let val = buf[m.rem_euclid(big as i64) as usize] * scale;
                    let k = (m - self.ctx.n_min()) as usize;
                    out.coeffs[k][(i, j)] = if val.norm() < 1e-15 * 1e-3 { ZERO } else { val };
                }
            }
        }
        Ok(out)
    }
}

/// A gauge transformation, numerically invertible on the fundamental annulus.
#[derive(Debug, Clone)]
pub struct GaugeTransform {
    f: MatrixWindow,
}

impl GaugeTransform {
    pub fn new(f: MatrixWindow) -> Result<Self> {
        let (r, c) = f.shape();
        if r != c {
            return Err(Error::Dimension("gauge transform must be square".into()));
        }
        let q = f.context().q();
        let tol = f.context().tol_abs;
        for k in 0..8 {
            let t = k as f64 / 8.0;
            let z = Complex64::from_polar(q.norm().powf(t * 0.9 + 0.05), std::f64::consts::TAU * (t + 0.0625));
            let det = f.eval(z)?.determinant();
            if !(det.norm() > tol) {
                return Err(Error::Singular(format!("det F({z}) vanishes")));
            }
        }
        Ok(Self { f })
    }

    pub fn identity(ctx: &NumericContext, n: usize) -> Self {
        Self { f: MatrixWindow::identity(ctx, n) }
    }

    pub fn matrix(&self) -> &MatrixWindow {
        &self.f
    }

    pub fn inverse(&self) -> Result<Self> {
        Ok(Self { f: self.f.inverse()? })
    }

    /// Composition `self ∘ other` (the product `self · other`).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        Ok(Self { f: self.f.mul(&other.f)? })
    }
}

/// `F[A] = (σ_q F) · A · F^{-1}`.
pub fn gauge_apply(f: &GaugeTransform, a: &MatrixWindow) -> Result<MatrixWindow> {
    let fm = f.matrix();
    if fm.shape().1 != a.shape().0 || a.shape().0 != a.shape().1 {
        return Err(Error::Dimension("gauge and matrix shapes".into()));
    }
    let finv = fm.inverse()?;
    fm.sigma().mul(a)?.mul(&finv)
}

/// Local data of a fuchsian system: `A = F[A0]` with `F = I + O(z)`.
#[derive(Debug, Clone)]
pub struct FuchsianReduction {
    pub a0: CMat,
    pub f: GaugeTransform,
}

/// Relative tolerance on `|λ/μ − qⁿ|` when testing resonance.
pub const RESONANCE_TOL: f64 = 1e-8;

pub fn check_non_resonant(q: Complex64, a0: &CMat, n_max: i64) -> Result<()> {
    let spec = linalg::eigenvalues(a0)?;
    for &l in &spec {
        for &m in &spec {
            let ratio = l / m;
            // only n with |qⁿ| near |ratio| can match
            let guess = (ratio.norm().ln() / q.norm().ln()).round() as i64;
            for n in (guess - 1).max(1)..=(guess + 1).min(n_max) {
                let qn = q.powi(n as i32);
                if (ratio - qn).norm() <= RESONANCE_TOL * qn.norm() {
                    return Err(Error::Resonant { lambda: l, mu: m, n });
                }
            }
        }
    }
    Ok(())
}

/// Reduces a fuchsian matrix `A` (holomorphic at 0, `A(0)` invertible,
/// non-resonant) to its constant part `A0 = A(0)`, returning the unique
/// `F = I + Σ_{n≥1} F_n zⁿ` with `(σ_q F) A0 = A F`.
pub fn fuchsian_reduce(a: &MatrixWindow) -> Result<FuchsianReduction> {
    let (r, c) = a.shape();
    if r != c {
        return Err(Error::Dimension("fuchsian matrix must be square".into()));
    }
    if !a.is_power_series() {
        return Err(Error::Unsupported("matrix has negative powers of z; not holomorphic at 0".into()));
    }
    let ctx = *a.context();
    let a0 = a.coeff(0);
    if linalg::condition_number(&a0) > 1e12 {
        return Err(Error::Singular("A(0)".into()));
    }
    check_non_resonant(ctx.q(), &a0, ctx.n_max())?;
    let q = ctx.q();
    let mut fs: Vec<CMat> = vec![linalg::identity(r)];
    let top = a.support().map_or(0, |s| s.1);
    for n in 1..=ctx.n_max() {
        let mut rhs = CMat::zeros(r, r);
        for k in 1..=n.min(top) {
            rhs += a.coeff(k) * &fs[(n - k) as usize];
        }
        let fnm = if rhs.iter().all(|z| z.norm() == 0.0) {
            CMat::zeros(r, r)
        } else {
            linalg::solve_sylvester_scaled(q.powi(n as i32), &a0, &a0, &rhs)?
        };
        fs.push(fnm);
    }
    let mut f = MatrixWindow::zero(&ctx, r, r);
    for (n, m) in fs.into_iter().enumerate() {
        f.set(n as i64, m);
    }
    Ok(FuchsianReduction { a0, f: GaugeTransform { f } })
}

/// Solution data of the rank-one equation `σ_q f = a f` with
/// `a = a0 · z^μ · u`, `u = 1 + O(z)`.
#[derive(Debug, Clone)]
pub struct Rank1Solution {
    pub a0: Complex64,
    pub mu: i64,
    pub u: LaurentWindow,
    /// Regular solution `v = Π_{m≥1} u(q^{-m} z)` as a power series.
    pub v: LaurentWindow,
}

impl Rank1Solution {
    /// Degree of the associated line bundle.
    pub fn degree(&self) -> i64 {
        self.mu
    }

    /// `v(z)` through the truncated infinite product.
    pub fn regular_part(&self, z: Complex64) -> Result<Complex64> {
        let ctx = self.u.context();
        let qinv = ctx.q().inv();
        let mut w = z;
        let mut prod = Complex64::new(1.0, 0.0);
        let mut quiet = 0;
        for _ in 0..100_000 {
            w *= qinv;
            let f = self.u.eval(w)?.value;
            prod *= f;
            if (f - 1.0).norm() < ctx.tol_rel {
                quiet += 1;
                if quiet >= 3 {
                    return Ok(prod);
                }
            } else {
                quiet = 0;
            }
        }
        Err(Error::Divergence("regular product did not settle".into()))
    }

    /// `f = e_{q,a0} · θ_q^μ · v`.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let q = self.u.context().q();
        let e = special::e_qa(q, z, self.a0)?;
        let th = special::theta_series(q, z)?;
        if th == ZERO && self.mu < 0 {
            return Err(Error::Pole { z });
        }
        Ok(e * th.powi(self.mu as i32) * self.regular_part(z)?)
    }
}

pub fn rank1_solve(a: &LaurentWindow) -> Result<Rank1Solution> {
    let mu = a.valuation()?;
    let a0 = a.coeff(mu);
    let u = a.shift(-mu).scale(a0.inv());
    let ctx = *a.context();
    let q = ctx.q();
    let mut v = LaurentWindow::zero(&ctx);
    let mut vs = vec![Complex64::new(1.0, 0.0)];
    v.set(0, vs[0]);
    for n in 1..=ctx.n_max() {
        let mut acc = ZERO;
        for k in 1..=n {
            acc += u.coeff(k) * vs[(n - k) as usize];
        }
        let vn = acc / (q.powi(n as i32) - 1.0);
        vs.push(vn);
        v.set(n, vn);
    }
    Ok(Rank1Solution { a0, mu, u, v })
}

/// `E_C(z) = P diag(e_{q,c_i}(z)) P^{-1}`, a solution of `E(qz) = C E(z)`.
#[derive(Debug, Clone)]
pub struct ConstantSolution {
    q: Complex64,
    eig: linalg::Eigen,
}

impl ConstantSolution {
    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        let mut vals = Vec::with_capacity(self.eig.values.len());
        for &l in &self.eig.values {
            vals.push(special::e_qa(self.q, z, l)?);
        }
        Ok(&self.eig.vectors * linalg::diag(&vals) * &self.eig.vectors_inv)
    }

    /// `E_C(z)/θ_q(z) = P diag(1/θ_q(z/c_i)) P^{-1}`; the scalar `θ_q(z)`
    /// cancels in quotients of two such solutions.
    pub fn eval_over_theta(&self, z: Complex64) -> Result<CMat> {
        let mut vals = Vec::with_capacity(self.eig.values.len());
        for &l in &self.eig.values {
            let t = special::theta_a(self.q, z, l)?;
            if t == Complex64::new(0.0, 0.0) {
                return Err(Error::Pole { z });
            }
            vals.push(t.inv());
        }
        Ok(&self.eig.vectors * linalg::diag(&vals) * &self.eig.vectors_inv)
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eig.values
    }
}

pub fn constant_solution(q: Complex64, c: &CMat) -> Result<ConstantSolution> {
    if linalg::condition_number(c) > 1e12 {
        return Err(Error::Singular("constant matrix".into()));
    }
    Ok(ConstantSolution { q, eig: linalg::eigen(c)? })
}

/// Block-upper-triangular standard form with diagonal blocks `z^{μ_i} A_i`.
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub slopes: Vec<i64>,
    pub blocks: Vec<CMat>,
    /// `couplings[(i, j)]` for `i < j`, an `r_i × r_j` matrix window.
    pub couplings: Vec<((usize, usize), MatrixWindow)>,
}

impl StandardForm {
    pub fn new(slopes: Vec<i64>, blocks: Vec<CMat>, couplings: Vec<((usize, usize), MatrixWindow)>) -> Result<Self> {
        if slopes.len() != blocks.len() || slopes.is_empty() {
            return Err(Error::Dimension("one block per slope".into()));
        }
        if slopes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Unsupported("slopes must be strictly increasing".into()));
        }
        for b in &blocks {
            if !b.is_square() || linalg::condition_number(b) >= 1e12 {
                return Err(Error::Singular("diagonal block".into()));
            }
        }
        for ((i, j), u) in &couplings {
            if i >= j || *j >= blocks.len() {
                return Err(Error::Dimension(format!("coupling index ({i}, {j})")));
            }
            if u.shape() != (blocks[*i].nrows(), blocks[*j].nrows()) {
                return Err(Error::Dimension(format!("coupling ({i}, {j}) shape")));
            }
        }
        Ok(Self { slopes, blocks, couplings })
    }

    pub fn rank(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }

    pub fn assemble(&self, ctx: &NumericContext) -> Result<MatrixWindow> {
        let n = self.rank();
        let offsets: Vec<usize> = self
            .blocks
            .iter()
            .scan(0, |acc, b| {
                let o = *acc;
                *acc += b.nrows();
                Some(o)
            })
            .collect();
        let mut out = MatrixWindow::zero(ctx, n, n);
        for (k, (mu, b)) in self.slopes.iter().zip(&self.blocks).enumerate() {
            let mut m = out.coeff(*mu);
            m.view_mut((offsets[k], offsets[k]), (b.nrows(), b.nrows())).copy_from(b);
            out.set(*mu, m);
        }
        for ((i, j), u) in &self.couplings {
            if u.context() != ctx {
                return Err(Error::ContextMismatch);
            }
            for e in ctx.n_min()..=ctx.n_max() {
                let mut m = out.coeff(e);
                let mut v = m.view_mut((offsets[*i], offsets[*j]), u.shape());
                v += u.coeff(e);
                out.set(e, m);
            }
        }
        Ok(out)
    }

    /// Two slopes `μ_1 < μ_2`: the extension class as a two-slope module of
    /// level `d = μ_2 − μ_1`, rank `r_1 r_2`, matrix `A_2^{-T} ⊗ A_1` and
    /// coupling `vec(U z^{-μ_2} A_2^{-1})` (column-major vectorization).
    pub fn two_slope_reduction(&self) -> Result<TwoSlopeModule> {
        if self.slopes.len() != 2 {
            return Err(Error::Unsupported("two-slope reduction needs exactly two slopes".into()));
        }
        let (a1, a2) = (&self.blocks[0], &self.blocks[1]);
        let d = (self.slopes[1] - self.slopes[0]) as u32;
        let a2inv = linalg::inverse(a2)?;
        let a = a2inv.transpose().kronecker(a1);
        let (r1, r2) = (a1.nrows(), a2.nrows());
        let coupling = self.couplings.iter().find(|(k, _)| *k == (0, 1)).map(|(_, u)| u.clone());
        let ctx = match &coupling {
            Some(u) => *u.context(),
            None => return Err(Error::Unsupported("standard form has no coupling window".into())),
        };
        let u = coupling.unwrap().shift(-self.slopes[1]).right_mul_const(&a2inv);
        let mut comps = vec![LaurentWindow::zero(&ctx); r1 * r2];
        for n in ctx.n_min()..=ctx.n_max() {
            let m = u.coeff(n);
            for jc in 0..r2 {
                for ir in 0..r1 {
                    if m[(ir, jc)] != ZERO {
                        comps[jc * r1 + ir].set(n, m[(ir, jc)]);
                    }
                }
            }
        }
        TwoSlopeModule::new(d, a, comps)
    }
}

/// `A_U = [[z^{-d} A, U], [0, 1]]`, an extension of the unit object by the
/// pure module of slope `−d`.
#[derive(Debug, Clone)]
pub struct TwoSlopeModule {
    pub d: u32,
    pub a: CMat,
    pub u: Vec<LaurentWindow>,
}

impl TwoSlopeModule {
    pub fn new(d: u32, a: CMat, u: Vec<LaurentWindow>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Unsupported("level d must be at least 1".into()));
        }
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Dimension("A must be square and nonempty".into()));
        }
        if u.len() != a.nrows() {
            return Err(Error::Dimension(format!("U has {} components, A is {}x{}", u.len(), a.nrows(), a.ncols())));
        }
        let ctx = *u[0].context();
        if u.iter().any(|w| *w.context() != ctx) {
            return Err(Error::ContextMismatch);
        }
        if linalg::condition_number(&a) > 1e12 {
            return Err(Error::Singular("A".into()));
        }
        Ok(Self { d, a, u })
    }

    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn context(&self) -> &NumericContext {
        self.u[0].context()
    }

    pub fn u_coeff(&self, n: i64) -> CVec {
        CVec::from_iterator(self.rank(), self.u.iter().map(|w| w.coeff(n)))
    }

    pub fn u_norm(&self) -> f64 {
        self.u.iter().map(|w| w.max_abs()).fold(0.0, f64::max)
    }

    pub fn u_eval(&self, z: Complex64) -> Result<CVec> {
        let mut v = CVec::zeros(self.rank());
        for (i, w) in self.u.iter().enumerate() {
            v[i] = w.eval(z)?.value;
        }
        Ok(v)
    }

    /// Support of `U` over all components.
    pub fn u_support(&self) -> Option<(i64, i64)> {
        self.u.iter().filter_map(|w| w.support()).fold(None, |acc, (a, b)| match acc {
            None => Some((a, b)),
            Some((x, y)) => Some((x.min(a), y.max(b))),
        })
    }

    pub fn with_u(&self, u: Vec<LaurentWindow>) -> Result<Self> {
        Self::new(self.d, self.a.clone(), u)
    }

    pub fn rewindow(&self, ctx: &NumericContext) -> Result<Self> {
        let u = self.u.iter().map(|w| w.rewindow(ctx)).collect::<Result<Vec<_>>>()?;
        Self::new(self.d, self.a.clone(), u)
    }

    pub fn to_json(&self) -> TwoSlopeJson {
        TwoSlopeJson { d: self.d, a: linalg::to_rows(&self.a), u: self.u.iter().map(|w| w.to_json()).collect() }
    }
}

/// Wire form `{"d": int, "A": [[[re, im], ...], ...], "U": [LaurentWindow, ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoSlopeJson {
    pub d: u32,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Complex64>>,
    #[serde(rename = "U")]
    pub u: Vec<LaurentJson>,
}

impl TwoSlopeJson {
    pub fn into_module(&self, ctx: &NumericContext) -> Result<TwoSlopeModule> {
        let a = linalg::from_rows(&self.a)?;
        let u = self.u.iter().map(|w| w.into_window(ctx)).collect::<Result<Vec<_>>>()?;
        TwoSlopeModule::new(self.d, a, u)
    }
}

/// `U := σ_q F − z^{-d} A F`, the coupling whose class is trivial by
/// construction.
pub fn two_slope_coupling(f: &[LaurentWindow], d: u32, a: &CMat) -> Result<Vec<LaurentWindow>> {
    let r = a.nrows();
    if f.len() != r {
        return Err(Error::Dimension("F and A sizes differ".into()));
    }
    let ctx = *f[0].context();
    let q = ctx.q();
    let mut out = vec![LaurentWindow::zero(&ctx); r];
    let fcoeff = |n: i64| CVec::from_iterator(r, f.iter().map(|w| w.coeff(n)));
    for n in ctx.n_min()..=ctx.n_max() {
        let un = fcoeff(n) * q.powi(n as i32) - a * fcoeff(n + d as i64);
        for i in 0..r {
            out[i].set(n, un[i]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct NormalForm {
    pub module: TwoSlopeModule,
    /// `U − Ũ = σ_q F − z^{-d} A F`.
    pub gauge: Vec<LaurentWindow>,
}

/// Normal form with coupling supported on exponents `−d ≤ n < 0`.
///
/// Coefficients `Ũ_n = U_n − qⁿ F_n + A F_{n+d}` are killed for `n ≥ 0` by a
/// descending recursion on `F_n`, then for `n < −d` by an ascending recursion
/// on `F_{n+d}`.
pub fn normal_form_two_slope(m: &TwoSlopeModule) -> Result<NormalForm> {
    let ctx = *m.context();
    let q = ctx.q();
    let r = m.rank();
    let d = m.d as i64;
    if linalg::condition_number(&m.a) > 1e12 {
        return Err(Error::Singular("A is numerically singular; elimination step fails".into()));
    }
    let ainv = linalg::inverse(&m.a)?;
    let (lo, hi) = (ctx.n_min(), ctx.n_max());
    let idx = |n: i64| (n - lo) as usize;
    let mut f: Vec<CVec> = vec![CVec::zeros(r); ctx.len()];
    let get = |f: &Vec<CVec>, n: i64| if ctx.contains(n) { f[idx(n)].clone() } else { CVec::zeros(r) };

    for n in (0..=hi).rev() {
        let rhs = m.u_coeff(n) + &m.a * get(&f, n + d);
        f[idx(n)] = rhs * q.powi(-(n as i32));
    }
    for n in lo..-d {
        let val = &ainv * (get(&f, n) * q.powi(n as i32) - m.u_coeff(n));
        f[idx(n + d)] = val;
    }

    let mut u = vec![LaurentWindow::zero(&ctx); r];
    for n in -d..0 {
        let un = m.u_coeff(n) - get(&f, n) * q.powi(n as i32) + &m.a * get(&f, n + d);
        for i in 0..r {
            u[i].set(n, un[i]);
        }
    }
    let mut gauge = vec![LaurentWindow::zero(&ctx); r];
    for n in lo..=hi {
        let v = &f[idx(n)];
        for i in 0..r {
            gauge[i].set(n, v[i]);
        }
    }
    Ok(NormalForm { module: m.with_u(u)?, gauge })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> NumericContext {
        NumericContext::real(2.0).unwrap()
    }

    fn rand_mat(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMat {
        CMat::from_fn(n, n, |_, _| c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
    }

    fn max_diff(a: &MatrixWindow, b: &MatrixWindow, lo: i64, hi: i64) -> f64 {
        (lo..=hi).map(|n| linalg::max_abs(&(a.coeff(n) - b.coeff(n)))).fold(0.0, f64::max)
    }

    #[test]
    fn identity_gauge_is_trivial() {
        let ctx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = MatrixWindow::from_terms(&ctx, &[(0, rand_mat(&mut rng, 2, 1.0)), (1, rand_mat(&mut rng, 2, 1.0))]).unwrap();
        let b = gauge_apply(&GaugeTransform::identity(&ctx, 2), &a).unwrap();
        assert!(max_diff(&a, &b, -200, 200) < 1e-15);
    }

    #[test]
    fn rank_one_regular_solution_is_a_gauge_equivalence() {
        let ctx = ctx();
        let u = LaurentWindow::from_real(&ctx, 0, &[1.0, 0.7, -0.2]).unwrap();
        let sol = rank1_solve(&u).unwrap();
        assert_eq!(sol.mu, 0);
        // the series and the product agree
        for z in [c(0.3, 0.2), c(-1.1, 0.5), c(1.5, -0.4)] {
            let s = sol.v.eval(z).unwrap().value;
            let p = sol.regular_part(z).unwrap();
            assert!((s - p).norm() < 1e-12 * p.norm().max(1.0));
        }
        let v = MatrixWindow::from_entries(&[vec![sol.v.clone()]]).unwrap();
        let one = MatrixWindow::identity(&ctx, 1);
        let g = gauge_apply(&GaugeTransform::new(v).unwrap(), &one).unwrap();
        let expect = MatrixWindow::from_entries(&[vec![u]]).unwrap();
        assert!(max_diff(&g, &expect, -200, 150) < 1e-10);
    }

    #[test]
    fn gauge_round_trip() {
        let ctx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = MatrixWindow::from_terms(&ctx, &[(0, linalg::identity(2)), (1, rand_mat(&mut rng, 2, 0.3))]).unwrap();
        let f = GaugeTransform::new(f).unwrap();
        let a = MatrixWindow::from_terms(&ctx, &[(0, rand_mat(&mut rng, 2, 1.0) + linalg::identity(2) * c(2.0, 0.0))])
            .unwrap();
        let b = gauge_apply(&f, &a).unwrap();
        let back = gauge_apply(&f.inverse().unwrap(), &b).unwrap();
        assert!(max_diff(&a, &back, -150, 150) < 1e-9);
    }

    #[test]
    fn circle_inverse_handles_zeros_inside_the_disk() {
        let ctx = NumericContext::new(c(2.0, 0.0), -60, 60, 1e-12, 1e-300).unwrap();
        // 1 + 2z vanishes at −1/2: its inverse on |z| = 1 has only negative powers
        let f = MatrixWindow::from_terms(
            &ctx,
            &[(0, CMat::from_element(1, 1, c(1.0, 0.0))), (1, CMat::from_element(1, 1, c(2.0, 0.0)))],
        )
        .unwrap();
        let inv = f.inverse().unwrap();
        assert!(inv.coeff(0).norm() < 1e-12);
        assert!((inv.coeff(-1)[(0, 0)] - c(0.5, 0.0)).norm() < 1e-12);
        assert!((inv.coeff(-2)[(0, 0)] - c(-0.25, 0.0)).norm() < 1e-12);
        let prod = f.mul(&inv).unwrap();
        assert!((prod.coeff(0)[(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(prod.coeff(3).norm() < 1e-12);
    }

    #[test]
    fn gauge_action_composes() {
        let ctx = NumericContext::new(c(2.0, 0.0), -80, 80, 1e-12, 1e-300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f1 = MatrixWindow::from_terms(&ctx, &[(0, linalg::identity(2)), (1, rand_mat(&mut rng, 2, 0.25))]).unwrap();
        let f2 = MatrixWindow::from_terms(&ctx, &[(0, linalg::identity(2)), (2, rand_mat(&mut rng, 2, 0.25))]).unwrap();
        let (g1, g2) = (GaugeTransform::new(f1).unwrap(), GaugeTransform::new(f2).unwrap());
        let a = MatrixWindow::from_terms(&ctx, &[(0, linalg::diag(&[c(1.0, 0.0), c(3.0, 0.5)]))]).unwrap();
        let lhs = gauge_apply(&g2, &gauge_apply(&g1, &a).unwrap()).unwrap();
        let rhs = gauge_apply(&g2.compose(&g1).unwrap(), &a).unwrap();
        assert!(max_diff(&lhs, &rhs, -40, 40) < 1e-9);
    }

    #[test]
    fn gauge_rejects_singular_transform() {
        let ctx = ctx();
        let f = MatrixWindow::zero(&ctx, 2, 2);
        assert!(GaugeTransform::new(f).is_err());
    }

    #[test]
    fn fuchsian_constant_and_round_trip() {
        let ctx = ctx();
        let a0 = linalg::diag(&[c(1.0, 0.0), c(0.3, 1.1)]);
        let red = fuchsian_reduce(&MatrixWindow::constant(&ctx, &a0)).unwrap();
        assert!(max_diff(red.f.matrix(), &MatrixWindow::identity(&ctx, 2), -200, 200) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cm = rand_mat(&mut rng, 2, 0.3);
        let f = MatrixWindow::from_terms(&ctx, &[(0, linalg::identity(2)), (1, cm)]).unwrap();
        let a = gauge_apply(&GaugeTransform::new(f.clone()).unwrap(), &MatrixWindow::constant(&ctx, &a0)).unwrap();
        let red = fuchsian_reduce(&a).unwrap();
        assert!(linalg::max_abs(&(red.a0 - &a0)) < 1e-12);
        assert!(max_diff(red.f.matrix(), &f, 0, 200) < 1e-9);
    }

    #[test]
    fn fuchsian_resonance_detected() {
        let ctx = ctx();
        let a0 = linalg::diag(&[c(1.0, 0.0), c(2.0, 0.0)]);
        match fuchsian_reduce(&MatrixWindow::constant(&ctx, &a0)) {
            Err(Error::Resonant { n, .. }) => assert_eq!(n, 1),
            other => panic!("expected resonance, got {other:?}"),
        }
        let neg = MatrixWindow::from_terms(&ctx, &[(-1, linalg::identity(2)), (0, linalg::identity(2))]).unwrap();
        assert!(matches!(fuchsian_reduce(&neg), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rank1_examples() {
        let ctx = ctx();
        let q = ctx.q();
        let z = LaurentWindow::monomial(&ctx, 1, c(1.0, 0.0));
        let sol = rank1_solve(&z).unwrap();
        assert_eq!(sol.degree(), 1);
        for p in [c(0.7, 0.3), c(-1.3, 0.9)] {
            let th = special::theta_series(q, p).unwrap();
            assert!((sol.eval(p).unwrap() - th).norm() < 1e-12 * th.norm());
        }
        let cst = c(1.7, -0.4);
        let sol = rank1_solve(&LaurentWindow::constant(&ctx, cst)).unwrap();
        let p = c(0.9, 0.8);
        assert!((sol.eval(p).unwrap() - special::e_qa(q, p, cst).unwrap()).norm() < 1e-12);

        let a = LaurentWindow::from_real(&ctx, 1, &[2.0, 2.0]).unwrap();
        let sol = rank1_solve(&a).unwrap();
        assert_eq!(sol.degree(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let p = Complex64::from_polar(rng.gen_range(0.3..1.5), rng.gen_range(0.0..6.2));
            let lhs = sol.eval(q * p).unwrap();
            let rhs = a.eval(p).unwrap().value * sol.eval(p).unwrap();
            assert!((lhs - rhs).norm() < 1e-9 * rhs.norm().max(1.0));
        }
        assert!(rank1_solve(&LaurentWindow::zero(&ctx)).is_err());
    }

    #[test]
    fn constant_solution_examples() {
        let q = c(2.0, 0.0);
        let e = constant_solution(q, &linalg::identity(2)).unwrap();
        assert!(linalg::max_abs(&(e.eval(c(0.4, 0.9)).unwrap() - linalg::identity(2))) < 1e-14);

        let cm = linalg::from_rows(&[vec![c(2.0, 0.0), c(1.0, 0.0)], vec![ZERO, c(3.0, 0.0)]]).unwrap();
        let e = constant_solution(q, &cm).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let z = Complex64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..6.2));
            let lhs = e.eval(q * z).unwrap() * linalg::inverse(&e.eval(z).unwrap()).unwrap();
            assert!(linalg::max_abs(&(lhs - &cm)) < 1e-9);
        }
        let e = constant_solution(q, &(linalg::identity(2) * q)).unwrap();
        let z = c(0.3, 1.2);
        assert!(linalg::max_abs(&(e.eval(z).unwrap() - linalg::identity(2) * (z / q))) < 1e-10);

        let jordan = linalg::from_rows(&[vec![c(2.0, 0.0), c(1.0, 0.0)], vec![ZERO, c(2.0, 0.0)]]).unwrap();
        assert!(matches!(constant_solution(q, &jordan), Err(Error::Unsupported(_))));
    }

    #[test]
    fn coupling_examples() {
        let ctx = ctx();
        let one = CMat::from_element(1, 1, c(1.0, 0.0));
        let u = two_slope_coupling(&[LaurentWindow::zero(&ctx)], 1, &one).unwrap();
        assert!(u[0].is_numerically_zero());
        let u = two_slope_coupling(&[LaurentWindow::constant(&ctx, c(1.0, 0.0))], 1, &one).unwrap();
        assert_eq!(u[0], LaurentWindow::from_real(&ctx, -1, &[-1.0, 1.0]).unwrap());
    }

    #[test]
    fn normal_form_examples() {
        let ctx = ctx();
        let one = CMat::from_element(1, 1, c(1.0, 0.0));
        let m = TwoSlopeModule::new(1, one.clone(), vec![LaurentWindow::monomial(&ctx, 1, c(1.0, 0.0))]).unwrap();
        let nf = normal_form_two_slope(&m).unwrap();
        assert_eq!(nf.module.u_support(), Some((-1, -1)));
        assert!((nf.module.u[0].coeff(-1) - c(0.5, 0.0)).norm() < 1e-15);

        // already normal
        let m = TwoSlopeModule::new(2, one.clone(), vec![LaurentWindow::from_real(&ctx, -2, &[1.0, -3.0]).unwrap()]).unwrap();
        let nf = normal_form_two_slope(&m).unwrap();
        assert_eq!(nf.module.u[0], m.u[0]);
        assert!(nf.gauge.iter().all(|g| g.is_numerically_zero()));

        // trivial class
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let a = rand_mat(&mut rng, 2, 1.0) + linalg::identity(2) * c(2.0, 0.0);
        let f: Vec<LaurentWindow> = (0..2)
            .map(|_| {
                let cs: Vec<Complex64> = (0..5).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                LaurentWindow::from_coeffs(&ctx, -2, &cs).unwrap()
            })
            .collect();
        let u = two_slope_coupling(&f, 2, &a).unwrap();
        let m = TwoSlopeModule::new(2, a, u).unwrap();
        let nf = normal_form_two_slope(&m).unwrap();
        assert!(nf.module.u.iter().all(|w| w.max_abs() < 1e-9));
    }

    #[test]
    fn normal_form_is_idempotent_and_gauge_is_consistent() {
        let ctx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = rand_mat(&mut rng, 2, 1.0) + linalg::identity(2) * c(1.5, 0.0);
        let u: Vec<LaurentWindow> = (0..2)
            .map(|_| {
                let cs: Vec<Complex64> = (0..7).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                LaurentWindow::from_coeffs(&ctx, -3, &cs).unwrap()
            })
            .collect();
        let m = TwoSlopeModule::new(3, a.clone(), u).unwrap();
        let nf = normal_form_two_slope(&m).unwrap();
        assert!(nf.module.u_support().is_none_or(|(lo, hi)| lo >= -3 && hi < 0));
        let again = normal_form_two_slope(&nf.module).unwrap();
        for (x, y) in again.module.u.iter().zip(&nf.module.u) {
            assert!(x.sub(y).unwrap().max_abs() < 1e-14);
        }
        let cob = two_slope_coupling(&nf.gauge, 3, &a).unwrap();
        for i in 0..2 {
            let diff = m.u[i].sub(&nf.module.u[i]).unwrap().sub(&cob[i]).unwrap();
            assert!(diff.max_abs() < 1e-12);
        }
    }

    #[test]
    fn tschakaloff_standard_form_reduces_to_level_one() {
        let ctx = ctx();
        // A = [[z^{-1}, z^{-1}], [0, 1]]
        let one = CMat::from_element(1, 1, c(1.0, 0.0));
        let u = MatrixWindow::from_terms(&ctx, &[(-1, one.clone())]).unwrap();
        let sf = StandardForm::new(vec![-1, 0], vec![one.clone(), one.clone()], vec![((0, 1), u)]).unwrap();
        let full = sf.assemble(&ctx).unwrap();
        assert_eq!(full.coeff(-1), linalg::from_rows(&[vec![c(1.0, 0.0), c(1.0, 0.0)], vec![ZERO, ZERO]]).unwrap());
        assert_eq!(full.coeff(0), linalg::from_rows(&[vec![ZERO, ZERO], vec![ZERO, c(1.0, 0.0)]]).unwrap());
        let m = sf.two_slope_reduction().unwrap();
        assert_eq!(m.d, 1);
        assert_eq!(m.u[0], LaurentWindow::monomial(&ctx, -1, c(1.0, 0.0)));
        let nf = normal_form_two_slope(&m).unwrap();
        assert!(nf.module.u[0].coeff(-1).norm() > 0.5);
    }

    #[test]
    fn two_slope_json_round_trip() {
        let ctx = ctx();
        let m = TwoSlopeModule::new(
            2,
            linalg::diag(&[c(2.0, 0.0), c(3.0, 1.0)]),
            vec![LaurentWindow::from_real(&ctx, -1, &[1.0, 2.0]).unwrap(), LaurentWindow::zero(&ctx)],
        )
        .unwrap();
        let s = serde_json::to_string(&m.to_json()).unwrap();
        let back: TwoSlopeJson = serde_json::from_str(&s).unwrap();
        let m2 = back.into_module(&ctx).unwrap();
        assert_eq!(m2.u, m.u);
        assert_eq!(m2.a, m.a);
        assert!(serde_json::from_str::<TwoSlopeJson>(r#"{"d":1,"A":[[[1,0]]],"U":[],"extra":0}"#).is_err());
    }
}
