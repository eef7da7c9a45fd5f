//! Summation of the divergent gauge transformation of a two-slope module in
//! a direction `c̄ ∈ E_q`, and the resulting Stokes cocycles.
//!
//! For `A_U = [[z^{-d} A, U], [0, 1]]` we look for `F` with
//! `σ_q F − z^{-d} A F = U` and poles only on `−c·q^ℤ`. Writing
//! `F = G / θ_q(z/c)^d` turns this into `c^d σ_q G − A G = z^d U θ_q(z/c)^d`,
//! solved coefficientwise by `G_n = (c^d qⁿ − A)^{-1} V_n`.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::laurent::{LaurentWindow, NumericContext};
use crate::linalg::{self, CMat, CVec};
use crate::qmodule::TwoSlopeModule;
use crate::special;

/// Relative tolerance for equality of points of `E_q`.
pub const CLASS_TOL: f64 = 1e-9;
/// A direction is forbidden when `min |c^d qⁿ − λ| < FORBIDDEN_REL · ‖A‖`.
pub const FORBIDDEN_REL: f64 = 1e-8;
/// Spill mass allowed in `V`, relative to its largest coefficient.
pub const SPILL_REL: f64 = 1e-12;

/// A point of `E_q = ℂ*/q^ℤ`, stored by its representative in `1 ≤ |c| < |q|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    rep: Complex64,
    q: Complex64,
}

impl Direction {
    pub fn new(q: Complex64, c: Complex64) -> Result<Self> {
        if c == Complex64::new(0.0, 0.0) || !c.is_finite() {
            return Err(Error::ZeroArgument("direction"));
        }
        if !(q.norm() > 1.0) {
            return Err(Error::InvalidContext("|q| must exceed 1".into()));
        }
        let lq = q.norm().ln();
        let k = (c.norm().ln() / lq).floor() as i32;
        let mut rep = c * q.powi(-k);
        if rep.norm() < 1.0 {
            rep *= q;
        } else if rep.norm() >= q.norm() {
            rep /= q;
        }
        Ok(Self { rep, q })
    }

    pub fn rep(&self) -> Complex64 {
        self.rep
    }

    pub fn q(&self) -> Complex64 {
        self.q
    }

    /// Distance between representatives, allowing for the wrap-around at
    /// the edges of the fundamental annulus.
    pub fn distance(&self, other: &Direction) -> f64 {
        [-1, 0, 1]
            .iter()
            .map(|&m| (self.rep - other.rep * self.q.powi(m)).norm())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn same_class(&self, other: &Direction, tol: f64) -> bool {
        self.distance(other) <= tol * self.rep.norm()
    }
}

#[derive(Debug, Clone)]
pub struct ForbiddenPoint {
    pub direction: Direction,
    /// An eigenvalue `λ` of `A` with `c^d ∈ λ q^ℤ`.
    pub eigenvalue: Complex64,
    /// Some representative satisfies `c^d = λ` exactly.
    pub principal: bool,
    /// Number of `(λ, root)` pairs landing on this point.
    pub multiplicity: usize,
}

#[derive(Debug, Clone)]
pub struct ForbiddenSet {
    pub points: Vec<ForbiddenPoint>,
}

impl ForbiddenSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn principal(&self) -> impl Iterator<Item = &ForbiddenPoint> {
        self.points.iter().filter(|p| p.principal)
    }

    pub fn nearest(&self, c: &Direction) -> Option<&ForbiddenPoint> {
        self.points
            .iter()
            .min_by(|a, b| a.direction.distance(c).partial_cmp(&b.direction.distance(c)).unwrap())
    }

    pub fn contains(&self, c: &Direction) -> bool {
        self.points.iter().any(|p| p.direction.same_class(c, CLASS_TOL))
    }
}

/// All classes `c̄` with `c^d ∈ Sp(A)·q^ℤ`.
///
/// For each eigenvalue these are the `d²` points `ζ λ^{1/d} q^{m/d}`,
/// `ζ^d = 1`, `0 ≤ m < d`. The `m = 0` points are the d-th roots of the
/// spectrum proper and are flagged `principal`.
pub fn forbidden_set(m: &TwoSlopeModule) -> Result<ForbiddenSet> {
    let q = m.context().q();
    let d = m.d as usize;
    let spec = linalg::eigenvalues(&m.a)?;
    let mut points: Vec<ForbiddenPoint> = Vec::new();
    for &lambda in &spec {
        for shift in 0..d {
            for k in 0..d {
                let log = (lambda.ln() + q.ln() * shift as f64 + Complex64::new(0.0, TAU * k as f64)) / d as f64;
                let dir = Direction::new(q, log.exp())?;
                match points.iter_mut().find(|p| p.direction.same_class(&dir, CLASS_TOL)) {
                    Some(p) => {
                        p.multiplicity += 1;
                        p.principal |= shift == 0;
                    }
                    None => points.push(ForbiddenPoint {
                        direction: dir,
                        eigenvalue: lambda,
                        principal: shift == 0,
                        multiplicity: 1,
                    }),
                }
            }
        }
    }
    Ok(ForbiddenSet { points })
}

/// `min_{λ, n} |c^d qⁿ − λ| / ‖A‖`.
pub fn forbidden_gap(m: &TwoSlopeModule, c: Complex64) -> Result<f64> {
    Ok(gap_for(m.context().q(), m.d, &linalg::eigenvalues(&m.a)?, linalg::spectral_norm(&m.a), c))
}

fn gap_for(q: Complex64, d: u32, spectrum: &[Complex64], norm: f64, c: Complex64) -> f64 {
    let cd = c.powi(d as i32);
    let mut gap = f64::INFINITY;
    for &lambda in spectrum {
        let n0 = ((lambda.norm() / cd.norm()).ln() / q.norm().ln()).round() as i32;
        for n in n0 - 1..=n0 + 1 {
            gap = gap.min((cd * q.powi(n) - lambda).norm() / norm);
        }
    }
    gap
}

/// `F_c̄ = G / θ_q(z/c)^d` together with its entire part `G`.
#[derive(Debug, Clone)]
pub struct SummationResult {
    pub g: Vec<LaurentWindow>,
    pub direction: Direction,
    /// The representative used in `θ_q(z/c)`.
    pub c: Complex64,
    pub d: u32,
    /// `min |c^d qⁿ − λ| / ‖A‖` for this direction.
    pub gap: f64,
}

impl SummationResult {
    pub fn context(&self) -> &NumericContext {
        self.g[0].context()
    }

    pub fn entire_part(&self, z: Complex64) -> Result<CVec> {
        let mut v = CVec::zeros(self.g.len());
        for (i, g) in self.g.iter().enumerate() {
            v[i] = g.eval(z)?.value;
        }
        Ok(v)
    }

    /// `θ_q(z/c)^d`.
    pub fn theta_factor(&self, z: Complex64) -> Result<Complex64> {
        Ok(special::theta_series(self.context().q(), z / self.c)?.powi(self.d as i32))
    }

    pub fn eval(&self, z: Complex64) -> Result<CVec> {
        let th = self.theta_factor(z)?;
        let g = self.entire_part(z)?;
        // below this, θ^d is rounding noise of its own series
        if th.norm() <= 1e-300 || theta_conditioning(self.context().q(), self.c, z)? < 1e-13 {
            return Err(Error::Pole { z });
        }
        Ok(g / th)
    }

    /// `(|θ_q(z/c)| / θ_|q|(|z/c|))^d`. Values of `F` at `z` carry a relative
    /// error of about machine epsilon divided by this number.
    pub fn conditioning(&self, z: Complex64) -> Result<f64> {
        Ok(theta_conditioning(self.context().q(), self.c, z)?.powi(self.d as i32))
    }

    /// `G` is negligible at both ends of its window, so `F` has no poles
    /// besides `−c·q^ℤ`.
    pub fn decay_certificate(&self) -> bool {
        self.g.iter().all(|g| g.is_decaying_at_both_ends())
    }
}

/// Sums in the direction `c̄`, using its canonical representative.
pub fn sum_direction(m: &TwoSlopeModule, c: &Direction) -> Result<SummationResult> {
    Summator::new(m)?.sum_at(c.rep())
}

/// Sums with an arbitrary representative `c` of its class.
pub fn sum_at(m: &TwoSlopeModule, c: Complex64) -> Result<SummationResult> {
    Summator::new(m)?.sum_at(c)
}

/// Per-module data shared by summations in many directions.
#[derive(Debug, Clone)]
pub struct Summator {
    module: TwoSlopeModule,
    theta: special::ThetaFamily,
    spectrum: Vec<Complex64>,
    norm: f64,
}

impl Summator {
    pub fn new(m: &TwoSlopeModule) -> Result<Self> {
        Ok(Self {
            module: m.clone(),
            theta: special::t_coeffs(m.context(), m.d)?,
            spectrum: linalg::eigenvalues(&m.a)?,
            norm: linalg::spectral_norm(&m.a),
        })
    }

    pub fn module(&self) -> &TwoSlopeModule {
        &self.module
    }

    pub fn gap(&self, c: Complex64) -> f64 {
        gap_for(self.module.context().q(), self.module.d, &self.spectrum, self.norm, c)
    }

    /// The gap of `c`, or `ForbiddenDirection` when it is below [`FORBIDDEN_REL`].
    pub fn check_direction(&self, c: Complex64) -> Result<f64> {
        let gap = self.gap(c);
        if gap < FORBIDDEN_REL {
            let m = &self.module;
            let direction = Direction::new(m.context().q(), c)?;
            let nearest = forbidden_set(m)?.nearest(&direction).map_or(c, |p| p.direction.rep());
            return Err(Error::ForbiddenDirection { nearest });
        }
        Ok(gap)
    }

    pub fn sum_direction(&self, c: &Direction) -> Result<SummationResult> {
        self.sum_at(c.rep())
    }

    pub fn sum_at(&self, c: Complex64) -> Result<SummationResult> {
        let m = &self.module;
        let q = m.context().q();
        let direction = Direction::new(q, c)?;
        let gap = self.check_direction(c)?;
        let d = m.d as i64;
        let mut ctx = *m.context();
        let mut module = m.clone();
        let mut theta = self.theta.clone();
        let mut attempt = 0;
        let v = loop {
            let cinv = c.inv();
            let th_c = LaurentWindow::from_fn(&ctx, |n| {
                let t = theta.t(n);
                if t == Complex64::new(0.0, 0.0) {
                    t
                } else {
                    (t.ln() + cinv.ln() * n as f64).exp()
                }
            });
            let v: Vec<LaurentWindow> =
                module.u.iter().map(|u| Ok(u.mul(&th_c)?.shift(d))).collect::<Result<Vec<_>>>()?;
            let scale = v.iter().map(|w| w.max_abs()).fold(0.0, f64::max);
            let spill = v.iter().map(|w| w.spill_mass()).fold(0.0, f64::max);
            if spill <= SPILL_REL * scale || scale == 0.0 {
                break v;
            }
            attempt += 1;
            if attempt > 3 {
                return Err(Error::Divergence(format!("spill {spill:e} persists after widening the window")));
            }
            ctx = ctx.with_window(2 * ctx.n_min(), 2 * ctx.n_max())?;
            module = module.rewindow(&ctx)?;
            theta = special::t_coeffs(&ctx, m.d)?;
        };
        let r = m.rank();
        let cd = c.powi(m.d as i32);
        let id = linalg::identity(r);
        let mut g = vec![LaurentWindow::zero(&ctx); r];
        for n in ctx.n_min()..=ctx.n_max() {
            let vn = CVec::from_iterator(r, v.iter().map(|w| w.coeff(n)));
            if vn.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                continue;
            }
            let mat: CMat = &id * (cd * q.powi(n as i32)) - &m.a;
            let gn = mat.lu().solve(&vn).ok_or_else(|| Error::Singular(format!("c^d q^{n} − A")))?;
            for i in 0..r {
                g[i].set(n, gn[i]);
            }
        }
        Ok(SummationResult { g, direction, c, d: m.d, gap })
    }
}

/// `F_{c̄,c̄₂} = F_{c̄₂} − F_c̄`, a solution of `σ_q Φ = z^{-d} A Φ`.
#[derive(Debug, Clone)]
pub struct StokesCocycle {
    pub from: SummationResult,
    pub to: SummationResult,
}

impl StokesCocycle {
    pub fn eval(&self, z: Complex64) -> Result<CVec> {
        Ok(self.to.eval(z)? - self.from.eval(z)?)
    }
}

pub fn stokes_cocycle(m: &TwoSlopeModule, c: &Direction, c2: &Direction) -> Result<StokesCocycle> {
    let s = Summator::new(m)?;
    Ok(StokesCocycle { from: s.sum_direction(c)?, to: s.sum_direction(c2)? })
}

/// `|σ_q F − z^{-d} A F − U|` at `z`, relative to the size of the terms.
pub fn summation_residual(m: &TwoSlopeModule, s: &SummationResult, z: Complex64) -> Result<f64> {
    let q = m.context().q();
    let f = s.eval(z)?;
    let fq = s.eval(q * z)?;
    let af = &m.a * &f * z.powi(-(m.d as i32));
    let u = m.u_eval(z)?;
    let res = (&fq - &af - &u).norm();
    Ok(res / fq.norm().max(af.norm()).max(u.norm()).max(1.0))
}

/// `|Φ(qz) − z^{-d} A Φ(z)|`, relative.
pub fn cocycle_residual(m: &TwoSlopeModule, phi: &StokesCocycle, z: Complex64) -> Result<f64> {
    let q = m.context().q();
    let p = phi.eval(z)?;
    let pq = phi.eval(q * z)?;
    let ap = &m.a * &p * z.powi(-(m.d as i32));
    let scale = phi.to.eval(z)?.norm().max(phi.from.eval(z)?.norm()).max(pq.norm()).max(1.0);
    Ok((&pq - &ap).norm() / scale)
}

/// `|θ_q(z/c)| / Σ|t_n (z/c)ⁿ|`: the cancellation suffered when the theta
/// series is summed at `z/c`. It is invariant under `z ↦ qz` and vanishes on
/// the spiral `−c·q^ℤ`.
pub fn theta_conditioning(q: Complex64, c: Complex64, z: Complex64) -> Result<f64> {
    let w = z / c;
    let mag = special::theta_series(Complex64::new(q.norm(), 0.0), Complex64::new(w.norm(), 0.0))?.norm();
    Ok(special::theta_series(q, w)?.norm() / mag)
}

/// `true` when `z` is at least `margin` (in log-modulus and argument) away
/// from the spiral `−c·q^ℤ`.
pub fn off_spiral(q: Complex64, c: Complex64, z: Complex64, margin: f64) -> bool {
    let w = -z / c;
    let lq = q.ln();
    // write w = q^s e^{iφ'} and compare with integer s
    let lw = w.ln();
    let s = lw.re / lq.re;
    for k in [s.floor(), s.ceil()] {
        let rem = lw - lq * k;
        let ang = (rem.im + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
        if rem.re.abs() < margin && ang.abs() < margin {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::qmodule::two_slope_coupling;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(d: u32, a: f64, u: LaurentWindow) -> TwoSlopeModule {
        TwoSlopeModule::new(d, CMat::from_element(1, 1, c(a, 0.0)), vec![u]).unwrap()
    }

    fn samples(rng: &mut ChaCha8Rng, q: Complex64, dirs: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = Vec::new();
        while out.len() < n {
            let z = Complex64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..TAU));
            if dirs.iter().all(|&cc| off_spiral(q, cc, z, 1e-2) && off_spiral(q, cc, q * z, 1e-2)) {
                out.push(z);
            }
        }
        out
    }

    #[test]
    fn canonical_representatives() {
        let q = c(2.0, 0.0);
        let a = Direction::new(q, c(3.0, 0.0)).unwrap();
        assert!((a.rep() - c(1.5, 0.0)).norm() < 1e-15);
        let b = Direction::new(q, c(0.375, 0.0)).unwrap();
        assert!(a.same_class(&b, CLASS_TOL));
        let e = Direction::new(q, c(1.0, 0.0)).unwrap();
        let f = Direction::new(q, c(1.999_999_999_999, 0.0)).unwrap();
        assert!(e.same_class(&f, CLASS_TOL));
        assert!(Direction::new(q, c(0.0, 0.0)).is_err());
    }

    #[test]
    fn forbidden_set_examples() {
        let ctx = NumericContext::real(2.0).unwrap();
        let one = LaurentWindow::constant(&ctx, c(1.0, 0.0));
        let fs = forbidden_set(&scalar(1, 2.0, one.clone())).unwrap();
        assert_eq!(fs.len(), 1);
        assert!(fs.contains(&Direction::new(c(2.0, 0.0), c(2.0, 0.0)).unwrap()));

        let m = scalar(2, 4.0, one.clone());
        let fs = forbidden_set(&m).unwrap();
        let q = c(2.0, 0.0);
        let principal: Vec<Complex64> = fs.principal().map(|p| p.direction.rep()).collect();
        assert_eq!(principal.len(), 2);
        assert!(fs.contains(&Direction::new(q, c(2.0, 0.0)).unwrap()));
        assert!(fs.contains(&Direction::new(q, c(-2.0, 0.0)).unwrap()));
        // c = 2√2 has c²·q^{-1} = 4 and is forbidden as well
        let s2 = c(2.0 * 2f64.sqrt(), 0.0);
        assert!(fs.contains(&Direction::new(q, s2).unwrap()));
        assert!(matches!(sum_at(&m, s2), Err(Error::ForbiddenDirection { .. })));
        assert_eq!(fs.len(), 4);

        let m = TwoSlopeModule::new(1, linalg::diag(&[c(2.0, 0.0), c(3.0, 0.0)]), vec![one.clone(), one]).unwrap();
        assert_eq!(forbidden_set(&m).unwrap().len(), 2);
    }

    #[test]
    fn zero_coupling_sums_to_zero() {
        let ctx = NumericContext::real(2.0).unwrap();
        let m = scalar(1, 1.0, LaurentWindow::zero(&ctx));
        let s = sum_direction(&m, &Direction::new(ctx.q(), c(1.5, 0.0)).unwrap()).unwrap();
        assert_eq!(s.eval(c(0.3, 0.7)).unwrap().norm(), 0.0);
    }

    #[test]
    fn residual_for_constant_coupling() {
        let ctx = NumericContext::real(2.0).unwrap();
        let q = ctx.q();
        let m = scalar(1, 1.0, LaurentWindow::constant(&ctx, c(1.0, 0.0)));
        let s = sum_direction(&m, &Direction::new(q, c(3.0, 0.0)).unwrap()).unwrap();
        assert!(s.decay_certificate());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for z in samples(&mut rng, q, &[c(3.0, 0.0)], 20) {
            let f = s.eval(z).unwrap()[0];
            let res = s.eval(q * z).unwrap()[0] - f / z - 1.0;
            assert!(res.norm() < 1e-8, "{z}: {res}");
        }
    }

    #[test]
    fn forbidden_direction_reports_nearest() {
        let ctx = NumericContext::real(2.0).unwrap();
        let m = scalar(1, 2.0, LaurentWindow::constant(&ctx, c(1.0, 0.0)));
        match sum_direction(&m, &Direction::new(ctx.q(), c(2.0, 0.0)).unwrap()) {
            Err(Error::ForbiddenDirection { nearest }) => assert!((nearest - c(1.0, 0.0)).norm() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trivial_class_recovers_the_polynomial_gauge() {
        let ctx = NumericContext::real(2.0).unwrap();
        let q = ctx.q();
        let a = linalg::from_rows(&[vec![c(1.3, 0.2), c(0.4, 0.0)], vec![c(-0.2, 0.1), c(2.7, -0.5)]]).unwrap();
        let f0 = vec![
            LaurentWindow::from_real(&ctx, -1, &[0.5, 1.0, -2.0]).unwrap(),
            LaurentWindow::from_real(&ctx, 0, &[0.3, 0.0, 0.7]).unwrap(),
        ];
        let u = two_slope_coupling(&f0, 2, &a).unwrap();
        let m = TwoSlopeModule::new(2, a, u).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for cc in [c(1.2, 0.3), c(-1.4, 0.9), c(0.2, 1.7)] {
            let s = sum_direction(&m, &Direction::new(q, cc).unwrap()).unwrap();
            for z in samples(&mut rng, q, &[cc], 5) {
                let f = s.eval(z).unwrap();
                let expect = CVec::from_iterator(2, f0.iter().map(|w| w.eval(z).unwrap().value));
                assert!((f - &expect).norm() < 1e-9 * expect.norm().max(1.0));
            }
        }
    }

    #[test]
    fn representative_does_not_matter() {
        let ctx = NumericContext::real(2.0).unwrap();
        let q = ctx.q();
        let m = scalar(2, 3.0, LaurentWindow::from_real(&ctx, -1, &[1.0, 0.5]).unwrap());
        let cc = c(1.1, 0.6);
        let s1 = sum_at(&m, cc).unwrap();
        let s2 = sum_at(&m, cc * q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for z in samples(&mut rng, q, &[cc], 10) {
            let (a, b) = (s1.eval(z).unwrap(), s2.eval(z).unwrap());
            assert!((&a - &b).norm() < 1e-10 * a.norm().max(1.0));
            let th = s1.theta_factor(z).unwrap();
            assert!((s1.entire_part(z).unwrap() - a.clone() * th).norm() < 1e-9 * s1.entire_part(z).unwrap().norm().max(1.0));
        }
    }

    #[test]
    fn cocycle_laws() {
        let ctx = NumericContext::real(2.0).unwrap();
        let q = ctx.q();
        let m = TwoSlopeModule::new(
            1,
            linalg::diag(&[c(1.7, 0.0), c(-1.2, 0.8)]),
            vec![
                LaurentWindow::from_real(&ctx, -1, &[1.0, 0.5]).unwrap(),
                LaurentWindow::from_real(&ctx, 0, &[0.2, -1.0]).unwrap(),
            ],
        )
        .unwrap();
        let dirs = [c(1.1, 0.4), c(-1.3, 0.2), c(0.3, -1.5)];
        let ds: Vec<Direction> = dirs.iter().map(|&x| Direction::new(q, x).unwrap()).collect();
        let same = stokes_cocycle(&m, &ds[0], &ds[0]).unwrap();
        let ab = stokes_cocycle(&m, &ds[0], &ds[1]).unwrap();
        let bc = stokes_cocycle(&m, &ds[1], &ds[2]).unwrap();
        let ac = stokes_cocycle(&m, &ds[0], &ds[2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut biggest = 0.0f64;
        for z in samples(&mut rng, q, &dirs, 20) {
            assert_eq!(same.eval(z).unwrap().norm(), 0.0);
            let lhs = ac.eval(z).unwrap();
            let rhs = ab.eval(z).unwrap() + bc.eval(z).unwrap();
            assert!((lhs - &rhs).norm() < 1e-12 * rhs.norm().max(1.0));
            assert!(cocycle_residual(&m, &ab, z).unwrap() < 1e-8);
            biggest = biggest.max(ab.eval(z).unwrap().norm());
        }
        assert!(biggest > 1e-6 * m.u_norm());
    }
}
