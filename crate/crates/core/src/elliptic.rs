//! q-invariant functions on `ℂ*`: residues, residue sums over a fundamental
//! annulus, zero counting by the argument principle, degrees of sections,
//! and the two rank-2 stability families.

use num_complex::Complex64;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use crate::contour;
use crate::error::{Error, Result};
use crate::laurent::LaurentWindow;
use crate::linalg::{CMat, ZERO};
use crate::qmodule::{normal_form_two_slope, StandardForm};
use crate::special::theta_series;
use crate::summation::Direction;

pub type ScalarFn = Arc<dyn Fn(Complex64) -> Result<Complex64> + Send + Sync>;

/// Multiplicative nudge of the annulus radius when a singular point sits on
/// its boundary.
pub const RADIUS_NUDGE: f64 = 1.013;
/// Boundary margin in log-modulus.
pub const BOUNDARY_MARGIN: f64 = 1e-3;

/// A function checked to satisfy `f(qz) = f(z)` on samples.
#[derive(Clone)]
pub struct EllipticProbe {
    f: ScalarFn,
    q: Complex64,
    pub radius: f64,
    /// `max |f(qz) − f(z)|` over the samples.
    pub defect: f64,
    /// `max |f|` over the samples.
    pub scale: f64,
}

impl std::fmt::Debug for EllipticProbe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EllipticProbe")
            .field("q", &self.q)
            .field("radius", &self.radius)
            .field("defect", &self.defect)
            .field("scale", &self.scale)
            .finish()
    }
}

impl EllipticProbe {
    pub fn new(q: Complex64, f: ScalarFn) -> Result<Self> {
        Self::with_radius(q, f, 1.0)
    }

    pub fn with_radius(q: Complex64, f: ScalarFn, radius: f64) -> Result<Self> {
        if !(q.norm() > 1.0) {
            return Err(Error::InvalidContext("|q| must exceed 1".into()));
        }
        let mut vals = Vec::new();
        for k in 0..48 {
            let s = (k as f64 * 0.618_034).fract();
            let z = Complex64::from_polar(radius * q.norm().powf(s), TAU * (k as f64 + 0.3) / 48.0);
            if let (Ok(a), Ok(b)) = (f(z), f(q * z)) {
                if a.is_finite() && b.is_finite() {
                    vals.push((a, b));
                }
            }
        }
        if vals.is_empty() {
            return Err(Error::Contour("no finite samples".into()));
        }
        let mut mags: Vec<f64> = vals.iter().map(|v| v.0.norm()).collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = mags[mags.len() / 2];
        // samples right next to a pole carry no information about invariance
        let kept: Vec<&(Complex64, Complex64)> =
            vals.iter().filter(|v| v.0.norm() <= 1e6 * median.max(1e-300)).collect();
        let scale = kept.iter().map(|v| v.0.norm().max(v.1.norm())).fold(0.0, f64::max);
        let defect = kept.iter().map(|v| (v.1 - v.0).norm()).fold(0.0, f64::max);
        if defect > 1e-8 * scale {
            return Err(Error::NotASection { defect: defect / scale });
        }
        Ok(Self { f, q, radius, defect, scale })
    }

    pub fn q(&self) -> Complex64 {
        self.q
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        (self.f)(z)
    }

    /// Representative of `p` in `{R ≤ |z| < R|q|}`.
    pub fn fundamental_rep(&self, p: Complex64) -> Complex64 {
        fundamental_rep(self.q, self.radius, p)
    }
}

fn fundamental_rep(q: Complex64, radius: f64, p: Complex64) -> Complex64 {
    let k = ((p.norm() / radius).ln() / q.norm().ln()).floor() as i32;
    let mut z = p * q.powi(-k);
    if z.norm() < radius {
        z *= q;
    } else if z.norm() >= radius * q.norm() {
        z /= q;
    }
    z
}

/// `(1/2πi) ∮ f dz/z` around the representative of `p`.
///
/// The radius is halved until 64- and 128-node trapezoid values agree.
pub fn residue_at(f: &EllipticProbe, p: Complex64) -> Result<Complex64> {
    let center = f.fundamental_rep(p);
    residue_near(&|z| f.eval(z), f.q, center, f.scale)
}

fn residue_near(
    f: &dyn Fn(Complex64) -> Result<Complex64>,
    q: Complex64,
    center: Complex64,
    scale: f64,
) -> Result<Complex64> {
    let mut rho = 0.25 * center.norm() * (1.0 - 1.0 / q.norm());
    for _ in 0..24 {
        let a = contour::scalar_residue_dz_over_z(f, center, rho, 64);
        let b = contour::scalar_residue_dz_over_z(f, center, rho, 128);
        if let (Ok(a), Ok(b)) = (a, b) {
            if (a - b).norm() <= 1e-10 * b.norm().max(scale).max(1e-300) {
                return Ok(b);
            }
        }
        rho *= 0.5;
    }
    Err(Error::Contour(format!("no clean contour around {center}")))
}

#[derive(Debug, Clone)]
pub struct ResidueSum {
    /// Located poles (fundamental representatives) with their residues.
    pub poles: Vec<(Complex64, Complex64)>,
    pub total: Complex64,
    pub radius: f64,
}

/// Locates the poles of `f` in the fundamental annulus and sums residues.
pub fn residue_sum(f: &EllipticProbe) -> Result<ResidueSum> {
    let mut radius = f.radius;
    for _ in 0..6 {
        let poles = locate_poles(f, radius)?;
        let lq = f.q.norm().ln();
        let near_edge = poles.iter().any(|p| {
            let s = (p.norm() / radius).ln();
            s < BOUNDARY_MARGIN || (lq - s) < BOUNDARY_MARGIN
        });
        if near_edge {
            radius *= RADIUS_NUDGE;
            continue;
        }
        let mut out = Vec::new();
        let mut total = ZERO;
        for p in poles {
            let r = residue_near(&|z| f.eval(z), f.q, p, f.scale)?;
            total += r;
            out.push((p, r));
        }
        return Ok(ResidueSum { poles: out, total, radius });
    }
    Err(Error::Contour("poles keep landing on the annulus boundary".into()))
}

fn locate_poles(f: &EllipticProbe, radius: f64) -> Result<Vec<Complex64>> {
    let (ns, nt) = (48usize, 144usize);
    let lq = f.q.norm().ln();
    let point = |i: usize, j: usize| {
        let s = radius.ln() + lq * (i as f64 + 0.5) / ns as f64;
        Complex64::from_polar(s.exp(), TAU * (j as f64 + 0.5) / nt as f64 - PI)
    };
    let mut mag = vec![vec![0.0f64; nt]; ns];
    for (i, row) in mag.iter_mut().enumerate() {
        for (j, m) in row.iter_mut().enumerate() {
            *m = match f.eval(point(i, j)) {
                Ok(v) if v.is_finite() => v.norm(),
                _ => f64::INFINITY,
            };
        }
    }
    let mut flat: Vec<f64> = mag.iter().flatten().cloned().filter(|x| x.is_finite()).collect();
    flat.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = flat.get(flat.len() / 2).cloned().unwrap_or(0.0);
    let mut found: Vec<Complex64> = Vec::new();
    for i in 0..ns {
        for j in 0..nt {
            let v = mag[i][j];
            // |f| has no interior maxima away from poles; Newton confirms
            if !(v > median) {
                continue;
            }
            let mut is_max = true;
            for di in [-1i64, 0, 1] {
                for dj in [-1i64, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let ii = i as i64 + di;
                    // the radial direction wraps through q
                    let jj = (j as i64 + dj).rem_euclid(nt as i64) as usize;
                    let w = if ii < 0 || ii >= ns as i64 {
                        let zz = point(i, jj) * Complex64::from_polar((lq * di as f64 / ns as f64).exp(), 0.0);
                        f.eval(zz).map(|x| x.norm()).unwrap_or(f64::INFINITY)
                    } else {
                        mag[ii as usize][jj]
                    };
                    if w > v {
                        is_max = false;
                    }
                }
            }
            if !is_max {
                continue;
            }
            if let Some(p) = refine_pole(f, point(i, j), median) {
                let p = fundamental_rep(f.q, radius, p);
                let dup = found.iter().any(|x| {
                    [-1, 0, 1].iter().any(|&k| (x - p * f.q.powi(k)).norm() < 1e-6 * p.norm())
                });
                if !dup {
                    found.push(p);
                }
            }
        }
    }
    Ok(found)
}

/// Newton on `1/f`; `None` when the iteration does not settle on a pole.
fn refine_pole(f: &EllipticProbe, start: Complex64, median: f64) -> Option<Complex64> {
    let g = |z: Complex64| -> Option<Complex64> {
        match f.eval(z) {
            Ok(v) if v.is_finite() && v != ZERO => Some(v.inv()),
            Ok(_) => None,
            Err(_) => Some(ZERO),
        }
    };
    let mut z = start;
    for _ in 0..200 {
        let gz = g(z)?;
        if gz == ZERO {
            return Some(z);
        }
        let h = 1e-6 * z.norm();
        let dg = (g(z + h)? - g(z - h)?) / (2.0 * h);
        if dg == ZERO {
            return None;
        }
        let step = gz / dg;
        z -= step;
        if step.norm() < 1e-14 * z.norm() {
            break;
        }
    }
    let v = f.eval(z).map(|x| x.norm()).unwrap_or(f64::INFINITY);
    if v > 1e6 * median.max(1e-300) {
        Some(z)
    } else {
        None
    }
}

/// Net change of `arg f` along `z(t)`, `t ∈ [0, 1]`, by adaptive unwrapping.
fn arg_change(f: &dyn Fn(Complex64) -> Result<Complex64>, path: &dyn Fn(f64) -> Complex64, nodes: usize) -> Result<f64> {
    fn seg(
        f: &dyn Fn(Complex64) -> Result<Complex64>,
        path: &dyn Fn(f64) -> Complex64,
        t0: f64,
        t1: f64,
        v0: Complex64,
        v1: Complex64,
        depth: u32,
    ) -> Result<f64> {
        let dphi = (v1 / v0).arg();
        if dphi.abs() < PI / 4.0 || depth == 0 {
            return Ok(dphi);
        }
        let tm = 0.5 * (t0 + t1);
        let vm = f(path(tm))?;
        if vm == ZERO {
            return Err(Error::Contour("zero on the integration path".into()));
        }
        Ok(seg(f, path, t0, tm, v0, vm, depth - 1)? + seg(f, path, tm, t1, vm, v1, depth - 1)?)
    }
    let mut total = 0.0;
    let mut prev = f(path(0.0))?;
    for k in 1..=nodes {
        let t = k as f64 / nodes as f64;
        let v = f(path(t))?;
        if v == ZERO || prev == ZERO {
            return Err(Error::Contour("zero on the integration path".into()));
        }
        total += seg(f, path, (k - 1) as f64 / nodes as f64, t, prev, v, 16)?;
        prev = v;
    }
    Ok(total)
}

/// Winding number of `f` around the circle `|z| = r`.
pub fn winding_on_circle(f: &dyn Fn(Complex64) -> Result<Complex64>, r: f64) -> Result<i64> {
    let w = arg_change(f, &|t| Complex64::from_polar(r, TAU * t), 512)? / TAU;
    let n = w.round();
    if (w - n).abs() > 1e-3 {
        return Err(Error::Contour(format!("winding number {w} is not an integer")));
    }
    Ok(n as i64)
}

/// Zeros of `f` on a box `[s0,s1] × [t0,t1]` in `(log|z|, arg z)`.
fn box_count(f: &dyn Fn(Complex64) -> Result<Complex64>, s0: f64, s1: f64, t0: f64, t1: f64) -> Result<i64> {
    let z = |s: f64, t: f64| Complex64::new(s, t).exp();
    let mut total = 0.0;
    total += arg_change(f, &|u| z(s0 + (s1 - s0) * u, t0), 128)?;
    total += arg_change(f, &|u| z(s1, t0 + (t1 - t0) * u), 128)?;
    total += arg_change(f, &|u| z(s1 - (s1 - s0) * u, t1), 128)?;
    total += arg_change(f, &|u| z(s0, t1 - (t1 - t0) * u), 128)?;
    let w = total / TAU;
    let n = w.round();
    if (w - n).abs() > 1e-3 {
        return Err(Error::Contour(format!("box winding {w} is not an integer")));
    }
    Ok(n as i64)
}

fn newton(f: &dyn Fn(Complex64) -> Result<Complex64>, start: Complex64) -> Option<Complex64> {
    let mut z = start;
    for _ in 0..100 {
        let v = f(z).ok()?;
        if v == ZERO {
            return Some(z);
        }
        let h = 1e-7 * z.norm();
        let dv = (f(z + h).ok()? - f(z - h).ok()?) / (2.0 * h);
        if dv == ZERO || !dv.is_finite() {
            return None;
        }
        let step = v / dv;
        z -= step;
        if step.norm() < 1e-15 * z.norm() {
            return Some(z);
        }
    }
    Some(z)
}

/// Zeros (with multiplicity) of a holomorphic `f` in `{R ≤ |z| < R|q|}`, by
/// argument-principle counts on subdivided boxes and Newton refinement.
pub fn annulus_zeros(f: &dyn Fn(Complex64) -> Result<Complex64>, q: Complex64, radius: f64) -> Result<Vec<(Complex64, usize)>> {
    let s0 = radius.ln();
    let s1 = s0 + q.norm().ln();
    let mut out = Vec::new();
    boxes(f, s0, s1, -PI, PI, 0, &mut out)?;
    Ok(out)
}

fn boxes(
    f: &dyn Fn(Complex64) -> Result<Complex64>,
    s0: f64,
    s1: f64,
    t0: f64,
    t1: f64,
    depth: u32,
    out: &mut Vec<(Complex64, usize)>,
) -> Result<()> {
    let n = box_count(f, s0, s1, t0, t1)?;
    if n < 0 {
        return Err(Error::RootCount(format!("negative zero count {n}: function has poles")));
    }
    if n == 0 {
        return Ok(());
    }
    let inside = |z: Complex64| {
        let (s, t) = (z.norm().ln(), z.arg());
        s >= s0 && s <= s1 && t >= t0 && t <= t1
    };
    let center = Complex64::new(0.5 * (s0 + s1), 0.5 * (t0 + t1)).exp();
    let size = (s1 - s0).max(t1 - t0);
    if n == 1 && size < 0.2 {
        if let Some(z) = newton(f, center) {
            if inside(z) {
                out.push((z, 1));
                return Ok(());
            }
        }
    }
    if size < 1e-9 || depth > 60 {
        let z = newton(f, center).filter(|z| inside(*z)).unwrap_or(center);
        out.push((z, n as usize));
        return Ok(());
    }
    // off-centre splits keep symmetric zeros away from the cut lines
    let sm = s0 + (s1 - s0) * 0.5137;
    let tm = t0 + (t1 - t0) * 0.4871;
    for (a, b, c, d) in [(s0, sm, t0, tm), (sm, s1, t0, tm), (s0, sm, tm, t1), (sm, s1, tm, t1)] {
        boxes(f, a, b, c, d, depth + 1, out)?;
    }
    Ok(())
}

/// `deg div X` for a holomorphic section of rank 1 or 2.
///
/// Rank 1 (meromorphic allowed): zeros minus poles in the fundamental
/// annulus, as the difference of windings on its two boundary circles.
/// Rank 2 (holomorphic): common zeros of the components, found as zeros of
/// a generic combination that a second generic combination also vanishes at.
pub fn section_degree(
    x: &(dyn Fn(Complex64) -> Result<Vec<Complex64>> + Sync),
    q: Complex64,
    rank: usize,
) -> Result<i64> {
    let mut radius = 1.0;
    for _ in 0..6 {
        let attempt = match rank {
            1 => {
                let f = |z: Complex64| Ok(x(z)?[0]);
                winding_on_circle(&f, radius * q.norm())
                    .and_then(|outer| Ok(outer - winding_on_circle(&f, radius)?))
            }
            2 => common_zero_degree(x, q, radius),
            _ => return Err(Error::Unsupported("section degree is implemented for rank 1 and 2".into())),
        };
        match attempt {
            Err(Error::Contour(_)) => radius *= RADIUS_NUDGE,
            other => return other,
        }
    }
    Err(Error::Contour("zeros keep landing on the annulus boundary".into()))
}

fn common_zero_degree(x: &(dyn Fn(Complex64) -> Result<Vec<Complex64>> + Sync), q: Complex64, radius: f64) -> Result<i64> {
    let l1 = [Complex64::new(1.0, 0.0), Complex64::new(0.731_6, 0.241_7)];
    let l2 = [Complex64::new(0.512_3, -0.8), Complex64::new(1.0, 0.0)];
    let g1 = |z: Complex64| -> Result<Complex64> {
        let v = x(z)?;
        Ok(l1[0] * v[0] + l1[1] * v[1])
    };
    let g2 = |z: Complex64| -> Result<Complex64> {
        let v = x(z)?;
        Ok(l2[0] * v[0] + l2[1] * v[1])
    };
    let mut deg = 0i64;
    for (z0, m1) in annulus_zeros(&g1, q, radius)? {
        let r = 1e-4 * z0.norm();
        let m2 = local_order(&g2, z0, r)?;
        let m1b = local_order(&g1, z0, r)?;
        deg += m1.min(m1b as usize).min(m2.max(0) as usize) as i64;
    }
    Ok(deg)
}

fn local_order(f: &dyn Fn(Complex64) -> Result<Complex64>, z0: Complex64, r: f64) -> Result<i64> {
    let w = arg_change(f, &|t| z0 + Complex64::from_polar(r, TAU * t), 64)? / TAU;
    Ok(w.round() as i64)
}

/// `φ_u(a) = u₀ θ_{q²}(q a^{-2}) + u₁ a^{-1} θ_{q²}(a^{-2})`.
pub fn phi_u(q: Complex64, a: Complex64, u0: Complex64, u1: Complex64) -> Result<Complex64> {
    if a == ZERO {
        return Err(Error::ZeroArgument("a"));
    }
    let q2 = q * q;
    let w = a.powi(-2);
    Ok(u0 * theta_series(q2, q * w)? + u1 * a.inv() * theta_series(q2, w)?)
}

/// The two zeros of `φ_u` on `E_q`.
pub fn phi_zeros(q: Complex64, u0: Complex64, u1: Complex64) -> Result<Vec<Direction>> {
    if u0 == ZERO && u1 == ZERO {
        return Err(Error::ZeroArgument("u"));
    }
    let f = |a: Complex64| phi_u(q, a, u0, u1);
    let mut radius = 1.0;
    let mut last = String::from("zeros of phi_u keep landing on the annulus boundary");
    for _ in 0..6 {
        match annulus_zeros(&f, q, radius) {
            Ok(zs) => {
                let count: usize = zs.iter().map(|z| z.1).sum();
                if count != 2 {
                    // a zero on the boundary circle is counted 0 or 2 times
                    last = format!("found {count} zeros of phi_u, expected 2");
                    radius *= RADIUS_NUDGE;
                    continue;
                }
                let lq = q.norm().ln();
                let edge = zs.iter().any(|(z, _)| {
                    let s = (z.norm() / radius).ln();
                    s < BOUNDARY_MARGIN || lq - s < BOUNDARY_MARGIN
                });
                if edge {
                    radius *= RADIUS_NUDGE;
                    continue;
                }
                let mut out = Vec::new();
                for (z, m) in zs {
                    for _ in 0..m {
                        out.push(Direction::new(q, z)?);
                    }
                }
                return Ok(out);
            }
            Err(Error::Contour(_)) => radius *= RADIUS_NUDGE,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RootCount(last))
}

/// `ψ(a) = θ_{q²}(q a^{-2}) / (a^{-1} θ_{q²}(a^{-2}))`.
pub fn psi(q: Complex64, a: Complex64) -> Result<Complex64> {
    let q2 = q * q;
    let w = a.powi(-2);
    let den = a.inv() * theta_series(q2, w)?;
    if den.norm() < 1e-14 {
        return Err(Error::Pole { z: a });
    }
    Ok(theta_series(q2, q * w)? / den)
}

/// `ψ(a)` by definition and by the product
/// `θ_q(−√(−q)a) θ_q(√(−q)a) / (a θ_q(−ia) θ_q(ia))`.
pub fn psi_factorization_check(q: Complex64, a: Complex64) -> Result<(Complex64, Complex64)> {
    let s = (-q).sqrt();
    let i = Complex64::new(0.0, 1.0);
    let den = a * theta_series(q, -i * a)? * theta_series(q, i * a)?;
    if den.norm() < 1e-14 {
        return Err(Error::Pole { z: a });
    }
    let fact = theta_series(q, -s * a)? * theta_series(q, s * a)? / den;
    Ok((psi(q, a)?, fact))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Family1Class {
    Split,
    StableIndecomposable,
}

#[derive(Debug, Clone, Copy)]
pub struct Family1 {
    pub class: Family1Class,
    /// The constant `v` with `A_u` equivalent to `A_v`.
    pub v: Complex64,
}

/// Classifies `A_u = [[1, u], [0, z]]` by its normal-form constant.
pub fn classify_family1(u: &LaurentWindow) -> Result<Family1> {
    let one = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
    let coupling = crate::qmodule::MatrixWindow::from_entries(&[vec![u.clone()]])?;
    let sf = StandardForm::new(vec![0, 1], vec![one.clone(), one], vec![((0, 1), coupling)])?;
    let nf = normal_form_two_slope(&sf.two_slope_reduction()?)?;
    let v = nf.module.u[0].coeff(-1);
    let norm = u.max_abs();
    let class = if v.norm() <= 1e-8 * norm || norm == 0.0 { Family1Class::Split } else { Family1Class::StableIndecomposable };
    Ok(Family1 { class, v })
}
