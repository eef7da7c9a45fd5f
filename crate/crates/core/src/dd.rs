//! Double-double complex arithmetic for residues of `⟨Y, F_c̄⟩`.
//!
//! Near `|q| = 1` the principal part of `F_c̄` at `−c` is of size
//! `|θ_q'(−1)|^{-d}` while the residue itself is of order one, so the
//! quadrature cancels ten or more digits. Everything on that path (the
//! coefficients of `G`, the dual section and the nodes) is carried in
//! about 32 significant digits here.

use num_complex::{Complex, Complex64};
use num_traits::{One, Zero};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::qmodule::TwoSlopeModule;

pub type Cdd = Complex<TwoFloat>;

const SERIES_EPS: f64 = 1e-34;
const MAX_TERMS: usize = 100_000;
const NEWTON_STEPS: usize = 3;

pub fn lift(z: Complex64) -> Cdd {
    Complex::new(TwoFloat::from(z.re), TwoFloat::from(z.im))
}

pub fn lower(z: Cdd) -> Complex64 {
    Complex64::new(z.re.hi() + z.re.lo(), z.im.hi() + z.im.lo())
}

fn mag(z: Cdd) -> f64 {
    lower(z).norm()
}

fn real(x: f64) -> Cdd {
    lift(Complex64::new(x, 0.0))
}

/// `1/x` by one Newton step from the `f64` reciprocal. `TwoFloat`'s own
/// division only reaches `f64` accuracy, so `/` is not used on these types.
fn recip(x: TwoFloat) -> TwoFloat {
    let one = TwoFloat::from(1.0);
    let x0 = TwoFloat::from(1.0 / x.hi());
    x0 + x0 * (one - x * x0)
}

pub fn inv(z: Cdd) -> Cdd {
    let s = recip(z.re * z.re + z.im * z.im);
    Complex::new(z.re * s, -(z.im * s))
}

pub fn div(a: Cdd, b: Cdd) -> Cdd {
    a * inv(b)
}

pub fn powi(z: Cdd, n: i64) -> Cdd {
    let mut base = if n < 0 { inv(z) } else { z };
    let mut e = n.unsigned_abs();
    let mut acc = Cdd::one();
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base = base * base;
        e >>= 1;
    }
    acc
}

/// The root of `x^d = target` closest to `guess`, by Newton's method.
pub fn root(target: Cdd, d: u32, guess: Complex64) -> Cdd {
    let mut x = lift(guess);
    let dd = real(d as f64);
    for _ in 0..NEWTON_STEPS {
        let p = powi(x, d as i64 - 1);
        x = x - div(p * x - target, dd * p);
    }
    x
}

/// `θ_q(z)` with the same reduction as the `f64` series.
pub fn theta(q: Cdd, z: Cdd) -> Result<Cdd> {
    if z.is_zero() {
        return Err(Error::ZeroArgument("z"));
    }
    let k = (mag(z).ln() / mag(q).ln()).floor() as i64;
    if k == 0 {
        return Ok(theta_annulus(q, z));
    }
    let w = z * powi(q, -k);
    Ok(powi(q, k * (k - 1) / 2) * powi(w, k) * theta_annulus(q, w))
}

fn theta_annulus(q: Cdd, z: Cdd) -> Cdd {
    let (zn, qn) = (mag(z), mag(q));
    let qinv = inv(q);
    let mut sum = Cdd::one();
    let mut biggest: f64 = 1.0;
    let mut term = Cdd::one();
    let mut qpow = Cdd::one();
    for n in 0..MAX_TERMS {
        qpow *= qinv;
        term = term * z * qpow;
        sum += term;
        let t = mag(term);
        biggest = biggest.max(t);
        if t == 0.0 || (zn < qn.powi(n as i32 + 1) && t <= SERIES_EPS * biggest) {
            break;
        }
    }
    let zinv = inv(z);
    let mut term = zinv;
    sum += term;
    let mut qpow = Cdd::one();
    for m in 1..MAX_TERMS {
        qpow *= qinv;
        term = term * qpow * zinv;
        sum += term;
        let t = mag(term);
        biggest = biggest.max(t);
        if t == 0.0 || (zn * qn.powi(m as i32) > 1.0 && t <= SERIES_EPS * biggest) {
            break;
        }
    }
    sum
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut m: Vec<Vec<Cdd>>, mut b: Vec<Cdd>) -> Option<Vec<Cdd>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| mag(m[i][col]).total_cmp(&mag(m[j][col])))?;
        if mag(m[p][col]) == 0.0 {
            return None;
        }
        m.swap(col, p);
        b.swap(col, p);
        for i in col + 1..n {
            let f = div(m[i][col], m[col][col]);
            for k in col..n {
                let t = m[col][k];
                m[i][k] -= f * t;
            }
            let t = b[col];
            b[i] -= f * t;
        }
    }
    let mut x = vec![Cdd::zero(); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= m[i][k] * x[k];
        }
        x[i] = div(s, m[i][i]);
    }
    Some(x)
}

fn lift_mat(a: &CMat) -> Vec<Vec<Cdd>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|k| lift(a[(i, k)])).collect()).collect()
}

/// Newton on `(A − λ)v = 0` with the largest component of `v` held fixed.
/// Falls back to the lifted input when the step is singular, which happens
/// for repeated eigenvalues.
fn refine_eigenpair(a: &[Vec<Cdd>], lambda: Complex64, v: &[Complex64]) -> (Cdd, Vec<Cdd>) {
    let r = v.len();
    let p = (0..r).max_by(|&i, &j| v[i].norm().total_cmp(&v[j].norm())).unwrap_or(0);
    let mut lam = lift(lambda);
    let mut x: Vec<Cdd> = v.iter().map(|&z| lift(z)).collect();
    for _ in 0..NEWTON_STEPS {
        let shifted = |i: usize, k: usize| if i == k { a[i][k] - lam } else { a[i][k] };
        let res: Vec<Cdd> = (0..r).map(|i| (0..r).fold(Cdd::zero(), |s, k| s + shifted(i, k) * x[k])).collect();
        let jac: Vec<Vec<Cdd>> =
            (0..r).map(|i| (0..r).map(|k| if k == p { -x[i] } else { shifted(i, k) }).collect()).collect();
        let Some(step) = solve(jac, res.iter().map(|&t| -t).collect()) else {
            return (lift(lambda), v.iter().map(|&z| lift(z)).collect());
        };
        for k in 0..r {
            if k == p {
                lam += step[k];
            } else {
                x[k] += step[k];
            }
        }
    }
    (lam, x)
}

/// Row `row` of `θ_q((jB)^{-1} z)^d` as `Σ_k V_{row,k} θ_q(z/(jβ_k))^d V^{-1}_{k,·}`.
pub struct Section {
    q: Cdd,
    d: u32,
    left: Vec<Cdd>,
    roots: Vec<Cdd>,
    vinv: Vec<Vec<Cdd>>,
}

impl Section {
    /// `beta` and `vectors` are the eigendata of `B` with `B^d = A`.
    pub fn new(m: &TwoSlopeModule, j: Complex64, row: usize, beta: &[Complex64], vectors: &CMat) -> Result<Self> {
        let r = m.rank();
        let d = m.d;
        let a = lift_mat(&m.a);
        let jdd = root(Cdd::one(), d, j);
        let mut cols = Vec::with_capacity(r);
        let mut roots = Vec::with_capacity(r);
        for (k, &b) in beta.iter().enumerate() {
            let v: Vec<Complex64> = vectors.column(k).iter().cloned().collect();
            let (lam, x) = refine_eigenpair(&a, b.powi(d as i32), &v);
            roots.push(jdd * root(lam, d, b));
            cols.push(x);
        }
        let vmat: Vec<Vec<Cdd>> = (0..r).map(|i| (0..r).map(|k| cols[k][i]).collect()).collect();
        let mut vinv = vec![vec![Cdd::zero(); r]; r];
        for e in 0..r {
            let unit = (0..r).map(|i| if i == e { Cdd::one() } else { Cdd::zero() }).collect();
            let x = solve(vmat.clone(), unit).ok_or_else(|| Error::Singular("eigenvector matrix".into()))?;
            for i in 0..r {
                vinv[i][e] = x[i];
            }
        }
        Ok(Self { q: lift(m.context().q()), d, left: vmat[row].clone(), roots, vinv })
    }

    pub fn eval(&self, z: Cdd) -> Result<Vec<Cdd>> {
        let r = self.vinv.len();
        let mut out = vec![Cdd::zero(); r];
        for k in 0..r {
            let w = self.left[k] * powi(theta(self.q, div(z, self.roots[k]))?, self.d as i64);
            for (o, &v) in out.iter_mut().zip(&self.vinv[k]) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

/// `F_c̄ = G / θ_q(z/c)^d`, with `G_n = (c^d qⁿ − A)^{-1} V_n` solved on the
/// full support of `V = z^d θ_q(z/c)^d U`.
pub struct Summation {
    q: Cdd,
    c: Cdd,
    d: u32,
    lo: i64,
    g: Vec<Vec<Cdd>>,
}

impl Summation {
    /// The caller has ruled out forbidden directions.
    pub fn new(m: &TwoSlopeModule, c: Complex64) -> Result<Self> {
        let q = lift(m.context().q());
        let cc = lift(c);
        let d = m.d;
        let (tlo, th) = theta_over_c(q, cc);
        let mut pow = vec![Cdd::one()];
        let mut plo = 0i64;
        for _ in 0..d {
            pow = convolve(&pow, &th);
            plo += tlo;
        }
        let Some((ulo, uhi)) = m.u_support() else {
            return Ok(Self { q, c: cc, d, lo: 0, g: Vec::new() });
        };
        let r = m.rank();
        let u: Vec<Vec<Cdd>> = m.u.iter().map(|w| (ulo..=uhi).map(|n| lift(w.coeff(n))).collect()).collect();
        let v: Vec<Vec<Cdd>> = u.iter().map(|ui| convolve(&pow, ui)).collect();
        let lo = plo + ulo + d as i64;
        let a = lift_mat(&m.a);
        let cd = powi(cc, d as i64);
        let mut qn = powi(q, lo);
        let mut g = Vec::with_capacity(v[0].len());
        for idx in 0..v[0].len() {
            let mat: Vec<Vec<Cdd>> = (0..r)
                .map(|i| (0..r).map(|k| if i == k { cd * qn - a[i][k] } else { -a[i][k] }).collect())
                .collect();
            let rhs: Vec<Cdd> = v.iter().map(|vi| vi[idx]).collect();
            let n = lo + idx as i64;
            g.push(solve(mat, rhs).ok_or_else(|| Error::Singular(format!("c^d q^{n} − A")))?);
            qn *= q;
        }
        Ok(Self { q, c: cc, d, lo, g })
    }

    pub fn eval(&self, z: Cdd) -> Result<Vec<Cdd>> {
        let r = self.g.first().map_or(0, Vec::len);
        let mut acc = vec![Cdd::zero(); r];
        let mut zn = powi(z, self.lo);
        for gn in &self.g {
            for (a, &x) in acc.iter_mut().zip(gn) {
                *a += x * zn;
            }
            zn *= z;
        }
        let th = powi(theta(self.q, div(z, self.c))?, self.d as i64);
        if th.is_zero() {
            return Err(Error::Pole { z: lower(z) });
        }
        let thinv = inv(th);
        Ok(acc.into_iter().map(|x| x * thinv).collect())
    }
}

/// Coefficients `q^{-n(n+1)/2} c^{-n}` of `θ_q(z/c)` down to relative size
/// `SERIES_EPS`, as `(lowest index, values)`.
fn theta_over_c(q: Cdd, c: Cdd) -> (i64, Vec<Cdd>) {
    let qinv = inv(q);
    let cinv = inv(c);
    let small = |t: Cdd, peak: f64| t.is_zero() || mag(t) <= SERIES_EPS * peak;
    let mut up = vec![Cdd::one()];
    let (mut t, mut qpow, mut peak) = (Cdd::one(), Cdd::one(), 1.0f64);
    for _ in 0..MAX_TERMS {
        qpow *= qinv;
        t = t * qpow * cinv;
        peak = peak.max(mag(t));
        if small(t, peak) && mag(qpow * cinv) < 1.0 {
            break;
        }
        up.push(t);
    }
    let mut down = Vec::new();
    let (mut t, mut qpow) = (c, Cdd::one());
    for _ in 0..MAX_TERMS {
        peak = peak.max(mag(t));
        if small(t, peak) && mag(qpow * c) < 1.0 {
            break;
        }
        down.push(t);
        qpow *= qinv;
        t = t * qpow * c;
    }
    let lo = -(down.len() as i64);
    down.reverse();
    down.extend(up);
    (lo, down)
}

fn convolve(a: &[Cdd], b: &[Cdd]) -> Vec<Cdd> {
    let mut out = vec![Cdd::zero(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (k, &y) in b.iter().enumerate() {
            out[i + k] += x * y;
        }
    }
    out
}

/// `(1/2πi) ∮ f(z) dz/z` over `|z − center| = radius` with `n` nodes, `n` a
/// power of two at least 4 so that the nodes are exact to double-double
/// precision (by halving the angle from `i`).
pub fn residue_dz_over_z(
    f: impl Fn(Cdd) -> Result<Cdd>,
    center: Complex64,
    radius: f64,
    n: usize,
) -> Result<Complex64> {
    if !n.is_power_of_two() || n < 4 {
        return Err(Error::Unsupported(format!("{n} quadrature nodes; need a power of two ≥ 4")));
    }
    let half = TwoFloat::from(0.5);
    let (mut cos, mut sin) = (TwoFloat::from(0.0), TwoFloat::from(1.0));
    let mut k = 4;
    while k < n {
        let c2 = ((TwoFloat::from(1.0) + cos) * half).sqrt();
        sin = sin * half * recip(c2);
        cos = c2;
        k *= 2;
    }
    let omega = Complex::new(cos, sin);
    let center = lift(center);
    let rad = real(radius);
    let mut step = Cdd::one();
    let mut acc = Cdd::zero();
    for _ in 0..n {
        let e = rad * step;
        let z = center + e;
        acc += f(z)? * div(e, z);
        step *= omega;
    }
    Ok(lower(acc * real(1.0 / n as f64)))
}

pub fn dot(a: &[Cdd], b: &[Cdd]) -> Cdd {
    a.iter().zip(b).fold(Cdd::zero(), |s, (&x, &y)| s + x * y)
}
