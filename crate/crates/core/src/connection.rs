//! Global fuchsian systems `X(qz) = A(z) X(z)` with rational `A`: local
//! fundamental solutions at 0 and ∞ and the Birkhoff connection matrix
//! `P = (X^∞)^{-1} X^0`.
//!
//! Local series are computed in a rescaled variable so that the matrix being
//! reduced converges on a disc of radius at least 2, then continued outwards
//! with the functional equation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::laurent::NumericContext;
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::qmodule::{constant_solution, fuchsian_reduce, ConstantSolution, FuchsianReduction, MatrixWindow};

/// Terms used to estimate the radius of convergence by the root test.
const PROBE_TERMS: usize = 48;

/// `num(z)/den(z)`, coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Rational {
    num: Vec<Complex64>,
    den: Vec<Complex64>,
}

fn trim(mut v: Vec<Complex64>) -> Vec<Complex64> {
    while v.last().is_some_and(|c| *c == ZERO) {
        v.pop();
    }
    v
}

fn horner(p: &[Complex64], z: Complex64) -> (Complex64, f64) {
    let mut v = ZERO;
    let mut m = 0.0;
    for c in p.iter().rev() {
        v = v * z + c;
        m = m * z.norm() + c.norm();
    }
    (v, m)
}

impl Rational {
    pub fn new(num: Vec<Complex64>, den: Vec<Complex64>) -> Result<Self> {
        let num = trim(num);
        let den = trim(den);
        if den.is_empty() {
            return Err(Error::ZeroArgument("denominator"));
        }
        if num.len() > den.len() {
            return Err(Error::Unsupported("entry of A has a pole at infinity (deg num > deg den)".into()));
        }
        if den[0] == ZERO {
            return Err(Error::Unsupported("entry of A has a pole at 0 (den(0) = 0)".into()));
        }
        Ok(Self { num, den })
    }

    pub fn constant(c: Complex64) -> Self {
        Self { num: trim(vec![c]), den: vec![ONE] }
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let (d, dm) = horner(&self.den, z);
        if d.norm() <= 1e-14 * dm {
            return Err(Error::Pole { z });
        }
        Ok(horner(&self.num, z).0 / d)
    }

    pub fn at_zero(&self) -> Complex64 {
        self.num.first().copied().unwrap_or(ZERO) / self.den[0]
    }

    pub fn at_infinity(&self) -> Complex64 {
        if self.num.len() == self.den.len() {
            self.num[self.num.len() - 1] / self.den[self.den.len() - 1]
        } else {
            ZERO
        }
    }

    /// Taylor coefficients of `z ↦ self(t z)` at 0.
    fn taylor(&self, t: Complex64, n: usize) -> Vec<Complex64> {
        series_quotient(&self.num, &self.den, t, n)
    }

    /// Taylor coefficients of `v ↦ self(1/(t v))` at 0.
    fn taylor_at_infinity(&self, t: Complex64, n: usize) -> Vec<Complex64> {
        // (p/q)(1/v) = v^{k−m} p̂(v)/q̂(v) with reversed coefficient lists
        let shift = self.den.len() - self.num.len();
        let mut p: Vec<Complex64> = vec![ZERO; shift];
        p.extend(self.num.iter().rev());
        let q: Vec<Complex64> = self.den.iter().rev().cloned().collect();
        series_quotient(&p, &q, t, n)
    }

    /// Roots of the denominator, from the companion matrix.
    pub fn poles(&self) -> Result<Vec<Complex64>> {
        let k = self.den.len() - 1;
        if k == 0 {
            return Ok(vec![]);
        }
        let lead = self.den[k];
        let mut comp = CMat::zeros(k, k);
        for i in 1..k {
            comp[(i, i - 1)] = ONE;
        }
        for i in 0..k {
            comp[(i, k - 1)] = -self.den[i] / lead;
        }
        linalg::eigenvalues(&comp)
    }
}

/// Coefficients of `p(tz)/q(tz)` up to `z^{n−1}`; requires `q(0) ≠ 0`.
fn series_quotient(p: &[Complex64], q: &[Complex64], t: Complex64, n: usize) -> Vec<Complex64> {
    let mut tp = ONE;
    let mut ps = Vec::with_capacity(n);
    let mut qs = Vec::with_capacity(n);
    for k in 0..n {
        ps.push(p.get(k).copied().unwrap_or(ZERO) * tp);
        qs.push(q.get(k).copied().unwrap_or(ZERO) * tp);
        tp *= t;
    }
    let mut r = vec![ZERO; n];
    for k in 0..n {
        let mut s = ps[k];
        for j in 1..=k.min(q.len().saturating_sub(1)) {
            s -= qs[j] * r[k - j];
        }
        r[k] = s / qs[0];
    }
    r
}

/// Power-series inverse of `Σ m_k v^k`.
fn series_inverse(m: &[CMat]) -> Result<Vec<CMat>> {
    let m0inv = linalg::inverse(&m[0])?;
    let mut out: Vec<CMat> = vec![m0inv.clone()];
    for n in 1..m.len() {
        let mut s = CMat::zeros(m[0].nrows(), m[0].ncols());
        for k in 1..=n {
            s += &m[k] * &out[n - k];
        }
        out.push(-(&m0inv * s));
    }
    Ok(out)
}

/// Root-test estimate of the radius of convergence; `∞` for series that
/// vanish past their first half.
fn radius_estimate(coeffs: &[CMat]) -> f64 {
    let c0 = linalg::max_abs(&coeffs[0]).max(f64::MIN_POSITIVE);
    let mut g: f64 = 0.0;
    for (n, c) in coeffs.iter().enumerate().skip(coeffs.len() / 2) {
        let a = linalg::max_abs(c) / c0;
        if a > 0.0 {
            g = g.max(a.powf(1.0 / n as f64));
        }
    }
    if g == 0.0 {
        f64::INFINITY
    } else {
        1.0 / g
    }
}

/// Which singular point a local solution lives at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Point {
    Zero,
    Infinity,
}

/// `σ_q X = A X` with `A` a square matrix of rational functions,
/// `A(0)` and `A(∞)` invertible.
#[derive(Debug, Clone)]
pub struct GlobalFuchsianSystem {
    ctx: NumericContext,
    entries: Vec<Vec<Rational>>,
}

impl GlobalFuchsianSystem {
    pub fn new(ctx: &NumericContext, entries: Vec<Vec<Rational>>) -> Result<Self> {
        let n = entries.len();
        if n == 0 || entries.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("A must be a nonempty square matrix".into()));
        }
        let s = Self { ctx: *ctx, entries };
        for (name, m) in [("A(0)", s.at_zero()), ("A(∞)", s.at_infinity())] {
            if linalg::condition_number(&m) > 1e12 {
                return Err(Error::Singular(name.into()));
            }
        }
        Ok(s)
    }

    /// The constant system `A ≡ c`.
    pub fn constant(ctx: &NumericContext, c: &CMat) -> Result<Self> {
        let entries = (0..c.nrows())
            .map(|i| (0..c.ncols()).map(|j| Rational::constant(c[(i, j)])).collect())
            .collect();
        Self::new(ctx, entries)
    }

    /// `A(z) = (A0 + (z/p) A∞) / (1 + z/p)`: one interior pole at `−p`.
    pub fn one_pole(ctx: &NumericContext, a0: &CMat, ainf: &CMat, p: Complex64) -> Result<Self> {
        let n = a0.nrows();
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| Rational::new(vec![a0[(i, j)], ainf[(i, j)] / p], vec![ONE, ONE / p]))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(ctx, entries)
    }

    pub fn rank(&self) -> usize {
        self.entries.len()
    }

    pub fn context(&self) -> &NumericContext {
        &self.ctx
    }

    fn map(&self, f: impl Fn(&Rational) -> Complex64) -> CMat {
        let n = self.rank();
        CMat::from_fn(n, n, |i, j| f(&self.entries[i][j]))
    }

    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        let n = self.rank();
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.entries[i][j].eval(z)?;
            }
        }
        Ok(m)
    }

    pub fn at_zero(&self) -> CMat {
        self.map(|r| r.at_zero())
    }

    pub fn at_infinity(&self) -> CMat {
        self.map(|r| r.at_infinity())
    }

    /// Poles of `A` in `ℂ*`, with repetitions across entries removed.
    pub fn poles(&self) -> Result<Vec<Complex64>> {
        let mut out: Vec<Complex64> = Vec::new();
        for row in &self.entries {
            for e in row {
                for p in e.poles()? {
                    if !out.iter().any(|x| (x - p).norm() <= 1e-9 * p.norm()) {
                        out.push(p);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> SystemJson {
        SystemJson {
            a: self
                .entries
                .iter()
                .map(|row| row.iter().map(|e| RationalJson { num: e.num.clone(), den: e.den.clone() }).collect())
                .collect(),
        }
    }

    /// Series in the local variable, rescaled by the returned factor `s`:
    /// at 0 the matrix `A(s w)`, at ∞ the matrix `A(1/(q s w))^{-1}`.
    fn local_series(&self, at: Point) -> Result<(MatrixWindow, Complex64)> {
        let n = self.rank();
        let q = self.ctx.q();
        let coeffs = |t: Complex64, len: usize| -> Result<Vec<CMat>> {
            let mut m = vec![CMat::zeros(n, n); len];
            for i in 0..n {
                for j in 0..n {
                    let e = &self.entries[i][j];
                    let c = match at {
                        Point::Zero => e.taylor(t, len),
                        Point::Infinity => e.taylor_at_infinity(q * t, len),
                    };
                    for (k, v) in c.into_iter().enumerate() {
                        m[k][(i, j)] = v;
                    }
                }
            }
            match at {
                Point::Zero => Ok(m),
                Point::Infinity => series_inverse(&m),
            }
        };
        let probe = coeffs(ONE, PROBE_TERMS)?;
        let radius = radius_estimate(&probe);
        if !(radius > 0.0) {
            return Err(Error::Divergence("local series has zero radius of convergence".into()));
        }
        let s = Complex64::new((0.5 * radius).min(1.0), 0.0);
        let len = self.ctx.n_max() as usize + 1;
        let terms: Vec<(i64, CMat)> = coeffs(s, len)?.into_iter().enumerate().map(|(k, m)| (k as i64, m)).collect();
        if terms.iter().any(|(_, m)| m.iter().any(|z| !z.is_finite())) {
            return Err(Error::Divergence("local series overflowed".into()));
        }
        Ok((MatrixWindow::from_terms(&self.ctx, &terms)?, s))
    }
}

/// A fundamental solution `X = F·E` near 0 or ∞.
#[derive(Debug, Clone)]
pub struct LocalSolution {
    system: GlobalFuchsianSystem,
    at: Point,
    /// Reduction of the rescaled local matrix.
    reduction: FuchsianReduction,
    scale: Complex64,
    e: ConstantSolution,
    c_inv: CMat,
}

pub fn local_solution(s: &GlobalFuchsianSystem, at: Point) -> Result<LocalSolution> {
    let (series, scale) = s.local_series(at)?;
    let reduction = fuchsian_reduce(&series)?;
    // X^∞ = H(1/z) E_{A(∞)}(z); E solves the same constant equation as E_{B0}(1/z)
    let c = match at {
        Point::Zero => s.at_zero(),
        Point::Infinity => s.at_infinity(),
    };
    let e = constant_solution(s.ctx.q(), &c)?;
    let c_inv = linalg::inverse(&reduction.a0)?;
    Ok(LocalSolution { system: s.clone(), at, reduction, scale, e, c_inv })
}

impl LocalSolution {
    pub fn point(&self) -> Point {
        self.at
    }

    /// The gauge part `F` (at 0, in `z`) or `H` (at ∞, in `u = 1/z`).
    pub fn gauge(&self, x: Complex64) -> Result<CMat> {
        let q = self.system.ctx.q();
        let s = self.scale.norm();
        let k = if x.norm() <= s { 0 } else { ((x.norm() / s).ln() / q.norm().ln()).ceil() as i32 };
        let w = x * q.powi(-k);
        let mut g = self.reduction.f.matrix().eval(w / self.scale)?;
        // G(q^k w) = M(q^{k−1} w) ⋯ M(w) G(w) C^{-k}
        let mut y = w;
        for _ in 0..k {
            let m = match self.at {
                Point::Zero => self.system.eval(y)?,
                Point::Infinity => {
                    let z = ONE / (q * y);
                    linalg::inverse(&self.system.eval(z)?).map_err(|_| Error::Pole { z })?
                }
            };
            g = m * g * &self.c_inv;
            y *= q;
        }
        Ok(g)
    }

    fn gauge_at(&self, z: Complex64) -> Result<CMat> {
        if z == ZERO {
            return Err(Error::ZeroArgument("z"));
        }
        match self.at {
            Point::Zero => self.gauge(z),
            Point::Infinity => self.gauge(ONE / z),
        }
    }

    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        Ok(self.gauge_at(z)? * self.e.eval(z)?)
    }

    /// `X(z)/θ_q(z)`, free of the zeros of `θ_q` shared by both local solutions.
    pub fn eval_over_theta(&self, z: Complex64) -> Result<CMat> {
        Ok(self.gauge_at(z)? * self.e.eval_over_theta(z)?)
    }

    /// `max |X(qz) − A(z)X(z)| / max |X(qz)|` over the given points.
    pub fn residual(&self, zs: &[Complex64]) -> Result<f64> {
        let q = self.system.ctx.q();
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for &z in zs {
            let xq = self.eval(q * z)?;
            let ax = self.system.eval(z)? * self.eval(z)?;
            num = num.max(linalg::max_abs(&(&xq - ax)));
            den = den.max(linalg::max_abs(&xq));
        }
        Ok(num / den.max(f64::MIN_POSITIVE))
    }
}

/// `P(z) = X^∞(z)^{-1} X^0(z)`.
#[derive(Debug, Clone)]
pub struct Connection {
    pub zero: LocalSolution,
    pub infinity: LocalSolution,
}

pub fn birkhoff_connection(s: &GlobalFuchsianSystem) -> Result<Connection> {
    Ok(Connection { zero: local_solution(s, Point::Zero)?, infinity: local_solution(s, Point::Infinity)? })
}

impl Connection {
    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        let xi = self.infinity.eval_over_theta(z)?;
        let xi_inv = linalg::inverse(&xi).map_err(|_| Error::Pole { z })?;
        Ok(xi_inv * self.zero.eval_over_theta(z)?)
    }

    pub fn det(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.eval(z)?.determinant())
    }

    pub fn q(&self) -> Complex64 {
        self.zero.system.ctx.q()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub max_defect: f64,
    pub mean_defect: f64,
    /// `max |P|` over the evaluated samples.
    pub max_abs: f64,
    /// `max_defect / max_abs`.
    pub relative: f64,
    pub evaluated: usize,
    /// Samples skipped because `z` or `qz` hit a pole.
    pub skipped: usize,
}

/// Defect statistics of `|P(qz) − P(z)|` over `samples`.
pub fn connection_ellipticity_report(
    p: &dyn Fn(Complex64) -> Result<CMat>,
    q: Complex64,
    samples: &[Complex64],
) -> EllipticityReport {
    let (mut max, mut sum, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    let (mut n, mut skipped) = (0usize, 0usize);
    for &z in samples {
        match (p(z), p(q * z)) {
            (Ok(a), Ok(b)) => {
                let d = linalg::max_abs(&(&b - &a));
                max = max.max(d);
                sum += d;
                scale = scale.max(linalg::max_abs(&a)).max(linalg::max_abs(&b));
                n += 1;
            }
            _ => skipped += 1,
        }
    }
    let mean = if n == 0 { 0.0 } else { sum / n as f64 };
    let relative = if scale == 0.0 { max } else { max / scale };
    EllipticityReport { max_defect: max, mean_defect: mean, max_abs: scale, relative, evaluated: n, skipped }
}

/// `count` points spread over the annulus `1 ≤ |z| < |q|`.
pub fn annulus_samples(q: Complex64, count: usize) -> Vec<Complex64> {
    (0..count)
        .map(|k| {
            let s = (k as f64 * 0.618_034 + 0.137).fract();
            Complex64::from_polar(q.norm().powf(s), TAU * (k as f64 + 0.29) / count as f64)
        })
        .collect()
}

/// Wire form `{"num": [[re, im], ...], "den": [[re, im], ...]}`, ascending powers.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RationalJson {
    pub num: Vec<Complex64>,
    pub den: Vec<Complex64>,
}

/// Wire form `{"A": [[RationalJson, ...], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<RationalJson>>,
}

impl SystemJson {
    pub fn into_system(&self, ctx: &NumericContext) -> Result<GlobalFuchsianSystem> {
        let entries = self
            .a
            .iter()
            .map(|row| row.iter().map(|e| Rational::new(e.num.clone(), e.den.clone())).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        GlobalFuchsianSystem::new(ctx, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }

    /// Random invertible rank-2 matrix whose eigenvalues avoid resonance.
    fn rand_local(rng: &mut ChaCha8Rng) -> CMat {
        loop {
            let m = CMat::from_fn(2, 2, |_, _| rand_c(rng)) + linalg::identity(2) * c(1.5, 0.0);
            if linalg::condition_number(&m) < 20.0 && linalg::eigen(&m).is_ok() {
                return m;
            }
        }
    }

    #[test]
    fn rational_basics() {
        let r = Rational::new(vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.5, 0.0)]).unwrap();
        assert!((r.eval(c(2.0, 0.0)).unwrap() - c(1.5, 0.0)).norm() < 1e-15);
        assert_eq!(r.at_zero(), c(1.0, 0.0));
        assert_eq!(r.at_infinity(), c(2.0, 0.0));
        let p = r.poles().unwrap();
        assert!((p[0] - c(-2.0, 0.0)).norm() < 1e-12);
        assert!(matches!(r.eval(c(-2.0, 0.0)), Err(Error::Pole { .. })));
        // (1+z)/(1+z/2) = 1 + z/2 − z²/4 + …
        let t = r.taylor(ONE, 4);
        assert!((t[1] - c(0.5, 0.0)).norm() < 1e-15 && (t[2] - c(-0.25, 0.0)).norm() < 1e-15);
        // at infinity: (1+1/v)/(1+1/(2v)) = (v+1)/(v+1/2) = 2 − 2v + 4v² …
        let t = r.taylor_at_infinity(ONE, 3);
        assert!((t[0] - c(2.0, 0.0)).norm() < 1e-15 && (t[1] - c(-2.0, 0.0)).norm() < 1e-14);
        assert!(Rational::new(vec![ONE, ONE], vec![ONE]).is_err());
        assert!(Rational::new(vec![ONE], vec![ZERO, ONE]).is_err());
    }

    #[test]
    fn constant_system_has_identity_connection() {
        let ctx = NumericContext::real(2.0).unwrap();
        let cm = CMat::from_row_slice(2, 2, &[c(1.3, 0.2), c(0.4, 0.0), c(-0.2, 0.1), c(0.7, -0.3)]);
        let s = GlobalFuchsianSystem::constant(&ctx, &cm).unwrap();
        let x0 = local_solution(&s, Point::Zero).unwrap();
        let e = constant_solution(ctx.q(), &cm).unwrap();
        let z = c(1.1, 0.7);
        assert!(linalg::max_abs(&(x0.eval(z).unwrap() - e.eval(z).unwrap())) < 1e-13);
        let p = birkhoff_connection(&s).unwrap();
        let samples = annulus_samples(ctx.q(), 30);
        let rep = connection_ellipticity_report(&|z| p.eval(z), ctx.q(), &samples);
        assert!(rep.max_defect < 1e-12, "{rep:?}");
        for &z in &samples[..5] {
            assert!(linalg::max_abs(&(p.eval(z).unwrap() - linalg::identity(2))) < 1e-12);
        }
    }

    #[test]
    fn rank_one_local_solution() {
        let ctx = NumericContext::real(2.0).unwrap();
        let cc = c(0.8, 0.3);
        let r = Rational::new(vec![cc, cc], vec![ONE, c(0.5, 0.0)]).unwrap();
        let s = GlobalFuchsianSystem::new(&ctx, vec![vec![r.clone()]]).unwrap();
        for at in [Point::Zero, Point::Infinity] {
            let x = local_solution(&s, at).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..20 {
                let z = Complex64::from_polar(rng.gen_range(0.3..5.0), rng.gen_range(0.0..TAU));
                let ratio = x.eval(ctx.q() * z).unwrap()[(0, 0)] / x.eval(z).unwrap()[(0, 0)];
                let a = r.eval(z).unwrap();
                assert!((ratio - a).norm() < 1e-8 * a.norm(), "{at:?} {z}");
            }
        }
    }

    #[test]
    fn rank_one_connection_is_elliptic() {
        let ctx = NumericContext::real(2.0).unwrap();
        let r = Rational::new(vec![c(0.8, 0.3), c(1.6, 0.6)], vec![ONE, c(0.5, 0.0)]).unwrap();
        let s = GlobalFuchsianSystem::new(&ctx, vec![vec![r]]).unwrap();
        let p = birkhoff_connection(&s).unwrap();
        let rep = connection_ellipticity_report(&|z| p.eval(z), ctx.q(), &annulus_samples(ctx.q(), 30));
        assert!(rep.relative < 1e-9, "{rep:?}");
    }

    #[test]
    fn rank_two_one_pole_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for q in [1.5, 2.0, 4.0] {
            let ctx = NumericContext::real(q).unwrap();
            for _ in 0..3 {
                let a0 = rand_local(&mut rng);
                let ainf = rand_local(&mut rng);
                let p = Complex64::from_polar(rng.gen_range(0.3..3.0), rng.gen_range(0.0..TAU));
                let s = GlobalFuchsianSystem::one_pole(&ctx, &a0, &ainf, p).unwrap();
                let samples = annulus_samples(ctx.q(), 30);
                for at in [Point::Zero, Point::Infinity] {
                    let x = local_solution(&s, at).unwrap();
                    assert!(x.residual(&samples).unwrap() < 1e-8);
                }
                let conn = birkhoff_connection(&s).unwrap();
                let rep = connection_ellipticity_report(&|z| conn.eval(z), ctx.q(), &samples);
                assert!(rep.relative < 1e-7, "q={q} {rep:?}");
                assert!(rep.evaluated >= 25);
                for &z in &samples {
                    if let Ok(d) = conn.det(z) {
                        assert!(d.norm() > 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn diagonal_rescaling_keeps_defect() {
        let ctx = NumericContext::real(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a0 = rand_local(&mut rng);
        let ainf = rand_local(&mut rng);
        let p = c(0.7, 0.9);
        let d = linalg::diag(&[c(2.0, 0.0), c(0.5, 0.3)]);
        let di = linalg::inverse(&d).unwrap();
        let s1 = GlobalFuchsianSystem::one_pole(&ctx, &a0, &ainf, p).unwrap();
        let s2 = GlobalFuchsianSystem::one_pole(&ctx, &(&d * &a0 * &di), &(&d * &ainf * &di), p).unwrap();
        let samples = annulus_samples(ctx.q(), 30);
        let r1 = birkhoff_connection(&s1).unwrap();
        let r2 = birkhoff_connection(&s2).unwrap();
        let e1 = connection_ellipticity_report(&|z| r1.eval(z), ctx.q(), &samples);
        let e2 = connection_ellipticity_report(&|z| r2.eval(z), ctx.q(), &samples);
        assert!((e1.relative - e2.relative).abs() < 1e-9);
    }

    #[test]
    fn resonant_local_data_rejected() {
        let ctx = NumericContext::real(2.0).unwrap();
        let a0 = linalg::diag(&[c(1.0, 0.0), c(2.0, 0.0)]);
        let ainf = linalg::diag(&[c(1.0, 0.0), c(1.3, 0.0)]);
        let s = GlobalFuchsianSystem::one_pole(&ctx, &a0, &ainf, c(1.0, 0.0)).unwrap();
        assert!(matches!(local_solution(&s, Point::Zero), Err(Error::Resonant { .. })));
        assert!(local_solution(&s, Point::Infinity).is_ok());
        let jordan = CMat::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        let s = GlobalFuchsianSystem::constant(&ctx, &jordan).unwrap();
        assert!(matches!(local_solution(&s, Point::Zero), Err(Error::Unsupported(_))));
    }

    #[test]
    fn json_round_trip() {
        let ctx = NumericContext::real(2.0).unwrap();
        let s = GlobalFuchsianSystem::one_pole(&ctx, &linalg::identity(2), &(linalg::identity(2) * c(1.3, 0.0)), c(0.5, 0.5)).unwrap();
        let j = serde_json::to_string(&s.to_json()).unwrap();
        let back: SystemJson = serde_json::from_str(&j).unwrap();
        let s2 = back.into_system(&ctx).unwrap();
        let z = c(0.3, 1.2);
        assert!(linalg::max_abs(&(s.eval(z).unwrap() - s2.eval(z).unwrap())) == 0.0);
        assert!(serde_json::from_str::<SystemJson>(r#"{"A":[],"B":1}"#).is_err());
    }
}
