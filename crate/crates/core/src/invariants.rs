//! Analytic invariants of a two-slope module `A_U`: q-Borel values at the
//! matrix points `jB` (`B^d = A`, `j^d = 1`), alien derivatives (residues of
//! the direction-parametrized summation) and Serre duality pairings.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::TAU;

use crate::contour;
use crate::dd;
use crate::error::{Error, Result};
use crate::laurent::{LaurentWindow, NumericContext};
use crate::linalg::{self, CMat, CVec, ZERO};
use crate::qmodule::TwoSlopeModule;
use crate::special::{self, ThetaFamily};
use crate::summation::{self, Direction, Summator};

/// Trapezoid nodes for the alien-derivative contour.
pub const ALIEN_NODES: usize = 64;
/// Smallest contour radius allowed around a forbidden direction.
pub const ALIEN_RHO_MIN: f64 = 1e-4;
/// Trapezoid nodes for z-residues of pairings.
pub const RESIDUE_NODES: usize = 128;

/// `B_q^{(d)} f(ξ) = Σ q^{-n} t_{-n} f_n ξⁿ`.
pub fn q_borel(f: &LaurentWindow, d: u32) -> Result<LaurentWindow> {
    let ctx = f.context();
    let t = special::t_coeffs(ctx, d)?;
    let q = ctx.q();
    let mut out = LaurentWindow::zero(ctx);
    if let Some((lo, hi)) = f.support() {
        for n in lo..=hi {
            let fn_ = f.coeff(n);
            if fn_ == ZERO {
                continue;
            }
            out.set(n, borel_weight(&t, q, n)? * fn_);
        }
    }
    Ok(out)
}

fn borel_weight(t: &ThetaFamily, q: Complex64, n: i64) -> Result<Complex64> {
    if !t.context().contains(-n) {
        return Err(Error::Dimension(format!("t_{} lies outside the window", -n)));
    }
    Ok(q.powi(-(n as i32)) * t.t(-n))
}

/// `B` with `B^d = A`, from principal d-th roots of the eigenvalues.
pub fn matrix_root(a: &CMat, d: u32) -> Result<CMat> {
    if d == 0 {
        return Err(Error::Unsupported("root order must be positive".into()));
    }
    let e = linalg::eigen(a)?;
    Ok(e.apply(|l| (l.ln() / d as f64).exp()))
}

fn roots_of_unity(d: u32) -> Vec<Complex64> {
    (0..d).map(|k| Complex64::from_polar(1.0, TAU * k as f64 / d as f64)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InvariantEntry {
    pub j: Complex64,
    pub vector: Vec<Complex64>,
}

/// `d` vectors in `ℂ^r`, one per d-th root of unity `j`.
#[derive(Debug, Clone)]
pub struct InvariantVector {
    pub entries: Vec<InvariantEntry>,
    /// The d-th root `B` of `A` that was used.
    pub root: CMat,
}

impl InvariantVector {
    pub fn flatten(&self) -> Vec<Complex64> {
        self.entries.iter().flat_map(|e| e.vector.iter().cloned()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// Eigendata of `B` with `ln(jβ_k)` for each `j`.
struct RootPowers {
    eig: linalg::Eigen,
    logs: Vec<(Complex64, Vec<Complex64>)>,
}

impl RootPowers {
    fn new(a: &CMat, d: u32) -> Result<Self> {
        let root = matrix_root(a, d)?;
        let eig = linalg::eigen(&root)?;
        let logs = roots_of_unity(d)
            .into_iter()
            .map(|j| (j, eig.values.iter().map(|b| (j * b).ln()).collect()))
            .collect();
        Ok(Self { eig, logs })
    }

    /// `w · (jB)^n` computed through `exp(ln w + n ln(jβ))`.
    fn weighted_power(&self, jidx: usize, w: Complex64, n: i64) -> CMat {
        let lw = w.ln();
        let diag: Vec<Complex64> = self.logs[jidx].1.iter().map(|l| (lw + l * n as f64).exp()).collect();
        &self.eig.vectors * linalg::diag(&diag) * &self.eig.vectors_inv
    }

    fn root(&self) -> CMat {
        self.eig.apply(|l| l)
    }
}

/// `Σ_n q^{-n} t_{-n} (jB)ⁿ U_n` for every `j`.
pub fn borel_invariants(m: &TwoSlopeModule) -> Result<InvariantVector> {
    let ctx = m.context();
    let q = ctx.q();
    let t = special::t_coeffs(ctx, m.d)?;
    let rp = RootPowers::new(&m.a, m.d)?;
    let mut entries = Vec::with_capacity(m.d as usize);
    for (jidx, &(j, _)) in rp.logs.iter().enumerate() {
        let mut acc = CVec::zeros(m.rank());
        if let Some((lo, hi)) = m.u_support() {
            for n in lo..=hi {
                let un = m.u_coeff(n);
                let w = borel_weight(&t, q, n)?;
                if un.iter().all(|z| *z == ZERO) || w == ZERO {
                    continue;
                }
                acc += rp.weighted_power(jidx, w, n) * un;
            }
        }
        entries.push(InvariantEntry { j, vector: acc.iter().cloned().collect() });
    }
    Ok(InvariantVector { entries, root: rp.root() })
}

/// Matrix of the linear map from normal-form coefficients of `U`
/// (`U_n`, `−d ≤ n < 0`, ordered by `n` then component) to the flattened
/// Borel invariants. Square of size `rd`.
pub fn borel_coordinate_map(ctx: &NumericContext, d: u32, a: &CMat) -> Result<CMat> {
    let r = a.nrows();
    let size = r * d as usize;
    let mut cols = Vec::with_capacity(size);
    for n in -(d as i64)..0 {
        for k in 0..r {
            let mut u = vec![LaurentWindow::zero(ctx); r];
            u[k] = LaurentWindow::monomial(ctx, n, Complex64::new(1.0, 0.0));
            let inv = borel_invariants(&TwoSlopeModule::new(d, a.clone(), u)?)?;
            cols.push(CVec::from_vec(inv.flatten()));
        }
    }
    Ok(CMat::from_columns(&cols))
}

/// Row `row` of `T_{jB} = Σ t_n (jB)^{-n} zⁿ = θ_q((jB)^{-1} z)^d`, a global
/// section `Y` of the dual bundle (`σ_q Y = z^d Y A^{-1}`).
#[derive(Debug, Clone)]
pub struct DualSection {
    pub j: Complex64,
    pub row: usize,
    pub coeffs: Vec<LaurentWindow>,
    q: Complex64,
    d: u32,
    left: Vec<Complex64>,
    roots: Vec<Complex64>,
    beta: Vec<Complex64>,
    vectors: CMat,
    vinv: CMat,
}

impl DualSection {
    /// `Y(z)` through `V diag(θ_q(z/(jβ_k))^d) V^{-1}`. Summing `coeffs`
    /// directly loses most digits wherever `Y` is small against its terms.
    pub fn eval(&self, z: Complex64) -> Result<CVec> {
        let mut out = CVec::zeros(self.vinv.ncols());
        for (k, (&l, &b)) in self.left.iter().zip(&self.roots).enumerate() {
            let th = special::theta_series(self.q, z / b)?.powi(self.d as i32);
            out += self.vinv.row(k).transpose() * (l * th);
        }
        Ok(out)
    }
}

/// Every `DualSection` of the module, grouped by `j`.
pub fn dual_sections(m: &TwoSlopeModule) -> Result<Vec<(Complex64, Vec<DualSection>)>> {
    let ctx = m.context();
    let t = special::t_coeffs(ctx, m.d)?;
    let rp = RootPowers::new(&m.a, m.d)?;
    let r = m.rank();
    let mut out = Vec::new();
    for (jidx, &(j, _)) in rp.logs.iter().enumerate() {
        let mut rows = vec![vec![LaurentWindow::zero(ctx); r]; r];
        for n in ctx.n_min()..=ctx.n_max() {
            let tn = t.t(n);
            if tn == ZERO {
                continue;
            }
            let c = rp.weighted_power(jidx, tn, -n);
            for i in 0..r {
                for k in 0..r {
                    rows[i][k].set(n, c[(i, k)]);
                }
            }
        }
        let roots: Vec<Complex64> = rp.eig.values.iter().map(|b| j * b).collect();
        let sections = rows
            .into_iter()
            .enumerate()
            .map(|(i, coeffs)| DualSection {
                j,
                row: i,
                coeffs,
                q: ctx.q(),
                d: m.d,
                left: rp.eig.vectors.row(i).iter().cloned().collect(),
                roots: roots.clone(),
                beta: rp.eig.values.clone(),
                vectors: rp.eig.vectors.clone(),
                vinv: rp.eig.vectors_inv.clone(),
            })
            .collect();
        out.push((j, sections));
    }
    Ok(out)
}

/// Relative defect of `σ_q Y = z^d Y A^{-1}` on coefficients:
/// `max |qⁿ Y_n − Y_{n−d} A^{-1}| / max |qⁿ Y_n|`.
pub fn section_defect(y: &[LaurentWindow], m: &TwoSlopeModule) -> Result<f64> {
    let r = m.rank();
    if y.len() != r {
        return Err(Error::Dimension("section and module ranks differ".into()));
    }
    let ctx = y[0].context();
    let q = ctx.q();
    let ainv = linalg::inverse(&m.a)?;
    let d = m.d as i64;
    let row = |n: i64| CMat::from_fn(1, r, |_, k| y[k].coeff(n));
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for n in ctx.n_min() + d..=ctx.n_max() {
        let lhs = row(n) * q.powi(n as i32);
        let rhs = row(n - d) * &ainv;
        num = num.max(linalg::max_abs(&(&lhs - &rhs)));
        den = den.max(linalg::max_abs(&lhs));
    }
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

/// Section equation tolerance for [`serre_pairing`].
pub const SECTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SerrePairing {
    /// `[(σ_q Y) U]_0` by windowed products.
    pub via_product: Complex64,
    /// `Σ_n q^{-n} Y_{-n} U_n`.
    pub via_sum: Complex64,
    pub difference: f64,
}

pub fn serre_pairing(y: &[LaurentWindow], m: &TwoSlopeModule) -> Result<SerrePairing> {
    let defect = section_defect(y, m)?;
    if !(defect <= SECTION_TOL) {
        return Err(Error::NotASection { defect });
    }
    let q = m.context().q();
    let mut via_product = ZERO;
    for (yi, ui) in y.iter().zip(&m.u) {
        via_product += yi.sigma().mul(ui)?.coeff(0);
    }
    let mut via_sum = ZERO;
    if let Some((lo, hi)) = m.u_support() {
        for n in lo..=hi {
            for (yi, ui) in y.iter().zip(&m.u) {
                let (a, b) = (yi.coeff(-n), ui.coeff(n));
                if a != ZERO && b != ZERO {
                    via_sum += q.powi(-(n as i32)) * a * b;
                }
            }
        }
    }
    Ok(SerrePairing { via_product, via_sum, difference: (via_product - via_sum).norm() })
}

/// Pairings of every row of `T_{jB}` with `cl(M_U)`.
pub fn serre_invariants(m: &TwoSlopeModule) -> Result<InvariantVector> {
    let mut entries = Vec::new();
    for (j, rows) in dual_sections(m)? {
        let mut v = Vec::with_capacity(rows.len());
        for row in &rows {
            v.push(serre_pairing(&row.coeffs, m)?.via_sum);
        }
        entries.push(InvariantEntry { j, vector: v });
    }
    Ok(InvariantVector { entries, root: matrix_root(&m.a, m.d)? })
}

/// Points near `c` where `c' ↦ F_{c'}(a)` can be singular: other forbidden
/// representatives and the zeros `−a q^k` of `θ_q(a/c')`.
fn alien_singularities(s: &Summator, c: Complex64, a: Complex64) -> Result<Vec<Complex64>> {
    let m = s.module();
    let q = m.context().q();
    let d = m.d as i32;
    let lq = q.norm().ln();
    let mut pts = Vec::new();
    for lambda in linalg::eigenvalues(&m.a)? {
        // c'^d = λ q^k with |c'| near |c|
        let k0 = ((c.norm().ln() * d as f64 - lambda.norm().ln()) / lq).round() as i32;
        for k in k0 - d - 1..=k0 + d + 1 {
            let base = (lambda.ln() + q.ln() * k as f64) / d as f64;
            for z in roots_of_unity(d as u32) {
                pts.push(base.exp() * z);
            }
        }
    }
    let k0 = ((a.norm() / c.norm()).ln() / lq).round() as i32;
    for k in k0 - 2..=k0 + 2 {
        pts.push(-a * q.powi(-k));
    }
    Ok(pts)
}

/// `(1/2πi) ∮ F_{c̄₀,c̄'}(a) dc'/c'` on a circle around `c`.
pub fn alien_derivative(m: &TwoSlopeModule, c: &Direction, a: Complex64, c0: &Direction) -> Result<CVec> {
    alien_derivative_with(&Summator::new(m)?, c, a, c0)
}

pub fn alien_derivative_with(s: &Summator, c: &Direction, a: Complex64, c0: &Direction) -> Result<CVec> {
    let q = s.module().context().q();
    if a == ZERO {
        return Err(Error::ZeroArgument("basepoint"));
    }
    let center = c.rep();
    for cc in [center, c0.rep()] {
        if !summation::off_spiral(q, cc, a, 1e-3) {
            return Err(Error::Contour(format!("basepoint {a} lies on the spiral of {cc}")));
        }
    }
    let dist = alien_singularities(s, center, a)?
        .into_iter()
        .map(|p| (p - center).norm())
        .filter(|&r| r > 1e-9 * center.norm())
        .fold(f64::INFINITY, f64::min);
    let rho = dist / 2.0;
    if !(rho >= ALIEN_RHO_MIN) {
        return Err(Error::Contour(format!("contour radius {rho:e} below {ALIEN_RHO_MIN:e}")));
    }
    let base = s.sum_direction(c0)?.eval(a)?;
    let res = contour::residue_dz_over_z(
        |cp| {
            let f = s.sum_at(cp)?.eval(a)?;
            Ok((f - &base).iter().cloned().collect())
        },
        center,
        rho,
        ALIEN_NODES,
    )?;
    Ok(CVec::from_vec(res))
}

/// Alien derivatives at every forbidden point.
pub fn alien_derivatives(m: &TwoSlopeModule, a: Complex64, c0: &Direction) -> Result<Vec<(Direction, CVec)>> {
    let s = Summator::new(m)?;
    summation::forbidden_set(m)?
        .points
        .iter()
        .map(|p| Ok((p.direction, alien_derivative_with(&s, &p.direction, a, c0)?)))
        .collect()
}

/// `Res_{z=−c} ⟨Y, F_c̄⟩ dz/z` and the same at `−c₂`, both in double-double
/// precision (see [`crate::dd`]).
pub fn residue_direction_independence(
    m: &TwoSlopeModule,
    y: &DualSection,
    c: &Direction,
    c2: &Direction,
) -> Result<(Complex64, Complex64)> {
    if y.coeffs.len() != m.rank() {
        return Err(Error::Dimension("section and module ranks differ".into()));
    }
    let s = Summator::new(m)?;
    let ydd = dd::Section::new(m, y.j, y.row, &y.beta, &y.vectors)?;
    let q = m.context().q();
    let one = |dir: &Direction| -> Result<Complex64> {
        s.check_direction(dir.rep())?;
        let f = dd::Summation::new(m, dir.rep())?;
        let center = -dir.rep();
        let rho = 0.5 * center.norm() * (1.0 - 1.0 / q.norm());
        dd::residue_dz_over_z(|z| Ok(dd::dot(&ydd.eval(z)?, &f.eval(z)?)), center, rho, RESIDUE_NODES)
    };
    Ok((one(c)?, one(c2)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::qmodule::{normal_form_two_slope, two_slope_coupling};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> NumericContext {
        NumericContext::real(2.0).unwrap()
    }

    fn rand_window(rng: &mut ChaCha8Rng, ctx: &NumericContext, lo: i64, len: usize) -> LaurentWindow {
        let cs: Vec<Complex64> = (0..len).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        LaurentWindow::from_coeffs(ctx, lo, &cs).unwrap()
    }

    fn rand_a(rng: &mut ChaCha8Rng, r: usize) -> CMat {
        CMat::from_fn(r, r, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            + linalg::identity(r) * c(2.0, 0.5)
    }

    #[test]
    fn q_borel_examples() {
        let ctx = NumericContext::new(c(2.0, 0.0), -40, 40, 1e-12, 1e-300).unwrap();
        let q = ctx.q();
        let f = LaurentWindow::from_real(&ctx, -2, &[1.0, 0.0, 3.0]).unwrap();
        let b = q_borel(&f, 2).unwrap();
        assert_eq!(b.support(), f.support());
        // Tschakaloff coefficients q^{n(n−1)/2}
        let tsch = LaurentWindow::from_fn(&ctx, |n| if (0..=30).contains(&n) { q.powi((n * (n - 1) / 2) as i32) } else { ZERO });
        let b = q_borel(&tsch, 1).unwrap();
        for n in 0..=30 {
            let expect = q.powi(-(n as i32));
            assert!((b.coeff(n) - expect).norm() < 1e-12 * expect.norm());
        }
        let g = LaurentWindow::from_real(&ctx, -1, &[0.5, -2.0]).unwrap();
        let lhs = q_borel(&f.add(&g).unwrap(), 2).unwrap();
        let rhs = q_borel(&f, 2).unwrap().add(&q_borel(&g, 2).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn matrix_root_examples() {
        let b = matrix_root(&linalg::identity(2), 3).unwrap();
        assert!(linalg::max_abs(&(b - linalg::identity(2))) < 1e-14);
        let b = matrix_root(&CMat::from_element(1, 1, c(4.0, 0.0)), 2).unwrap();
        assert!((b[(0, 0)] - c(2.0, 0.0)).norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..=4 {
            let a = rand_a(&mut rng, 3);
            let b = matrix_root(&a, d).unwrap();
            let mut p = linalg::identity(3);
            for _ in 0..d {
                p *= &b;
            }
            assert!(linalg::max_abs(&(p - &a)) < 1e-10 * linalg::max_abs(&a));
        }
    }

    #[test]
    fn borel_examples() {
        let ctx = ctx();
        let m = TwoSlopeModule::new(1, CMat::from_element(1, 1, c(3.0, 1.0)), vec![LaurentWindow::constant(&ctx, c(0.7, -0.2))])
            .unwrap();
        let inv = borel_invariants(&m).unwrap();
        assert_eq!(inv.entries.len(), 1);
        assert!((inv.entries[0].vector[0] - c(0.7, -0.2)).norm() < 1e-15);

        let zero = TwoSlopeModule::new(2, linalg::identity(2) * c(2.0, 0.0), vec![LaurentWindow::zero(&ctx); 2]).unwrap();
        assert_eq!(borel_invariants(&zero).unwrap().max_abs(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in 1..=3 {
            let a = rand_a(&mut rng, 2);
            let f: Vec<LaurentWindow> = (0..2).map(|_| rand_window(&mut rng, &ctx, -2, 5)).collect();
            let u = two_slope_coupling(&f, d, &a).unwrap();
            let m = TwoSlopeModule::new(d, a, u).unwrap();
            let inv = borel_invariants(&m).unwrap();
            assert!(inv.max_abs() < 1e-8 * m.u_norm(), "d={d}: {}", inv.max_abs());
        }
    }

    #[test]
    fn serre_pairing_formulas_agree() {
        let ctx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=3 {
            let a = rand_a(&mut rng, 2);
            let u: Vec<LaurentWindow> = (0..2).map(|_| rand_window(&mut rng, &ctx, -3, 7)).collect();
            let m = TwoSlopeModule::new(d, a, u).unwrap();
            let borel = borel_invariants(&m).unwrap();
            for (jidx, (_, rows)) in dual_sections(&m).unwrap().into_iter().enumerate() {
                for (i, row) in rows.iter().enumerate() {
                    assert!(section_defect(&row.coeffs, &m).unwrap() < 1e-12);
                    let p = serre_pairing(&row.coeffs, &m).unwrap();
                    assert!(p.difference < 1e-12 * p.via_sum.norm().max(1.0), "{p:?}");
                    let b = borel.entries[jidx].vector[i];
                    assert!((p.via_sum - b).norm() < 1e-10 * b.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn non_section_is_rejected() {
        let ctx = ctx();
        let m = TwoSlopeModule::new(1, CMat::from_element(1, 1, c(2.0, 0.0)), vec![LaurentWindow::constant(&ctx, c(1.0, 0.0))])
            .unwrap();
        let y = vec![LaurentWindow::from_real(&ctx, 0, &[1.0, 1.0]).unwrap()];
        assert!(matches!(serre_pairing(&y, &m), Err(Error::NotASection { .. })));
    }

    #[test]
    fn serre_trivial_and_linear() {
        let ctx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = rand_a(&mut rng, 2);
        let f: Vec<LaurentWindow> = (0..2).map(|_| rand_window(&mut rng, &ctx, -1, 4)).collect();
        let m = TwoSlopeModule::new(2, a.clone(), two_slope_coupling(&f, 2, &a).unwrap()).unwrap();
        assert!(serre_invariants(&m).unwrap().max_abs() < 1e-8 * m.u_norm());

        let u1: Vec<LaurentWindow> = (0..2).map(|_| rand_window(&mut rng, &ctx, -2, 5)).collect();
        let u2: Vec<LaurentWindow> = (0..2).map(|_| rand_window(&mut rng, &ctx, -2, 5)).collect();
        let sum: Vec<LaurentWindow> = u1.iter().zip(&u2).map(|(x, y)| x.add(y).unwrap()).collect();
        let s1 = serre_invariants(&m.with_u(u1).unwrap()).unwrap().flatten();
        let s2 = serre_invariants(&m.with_u(u2).unwrap()).unwrap().flatten();
        let s12 = serre_invariants(&m.with_u(sum).unwrap()).unwrap().flatten();
        for k in 0..s12.len() {
            assert!((s12[k] - s1[k] - s2[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn serre_pairings_with_theta_rows_are_borel_values() {
        let ctx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in 1..=3 {
            let a = rand_a(&mut rng, 2);
            let u: Vec<LaurentWindow> = (0..2).map(|_| rand_window(&mut rng, &ctx, -2, 5)).collect();
            let m = TwoSlopeModule::new(d, a, u).unwrap();
            let s = serre_invariants(&m).unwrap().flatten();
            let b = borel_invariants(&m).unwrap().flatten();
            for (x, y) in s.iter().zip(&b) {
                assert!((x - y).norm() < 1e-10 * y.norm().max(1.0), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn coordinate_map_has_full_rank() {
        let ctx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (r, d) in [(1, 1), (2, 2), (3, 3)] {
            let a = rand_a(&mut rng, r);
            let map = borel_coordinate_map(&ctx, d, &a).unwrap();
            let sv = map.singular_values();
            let (mx, mn) = (sv.max(), sv.min());
            assert!(mn > 1e-8 * mx, "r={r} d={d}: {mn} / {mx}");
        }
    }

    #[test]
    fn alien_derivative_examples() {
        let ctx = ctx();
        let q = ctx.q();
        let a = c(0.63, 0.41);
        let m = TwoSlopeModule::new(1, CMat::from_element(1, 1, c(2.0, 0.0)), vec![LaurentWindow::constant(&ctx, c(1.0, 0.0))])
            .unwrap();
        let c0 = Direction::new(q, c(1.3, 0.7)).unwrap();
        let forbidden = Direction::new(q, c(2.0, 0.0)).unwrap();
        let v = alien_derivative(&m, &forbidden, a, &c0).unwrap();
        assert!(v[0].norm() > 1e-6);
        let m2 = m.with_u(vec![LaurentWindow::constant(&ctx, c(2.0, 0.0))]).unwrap();
        let v2 = alien_derivative(&m2, &forbidden, a, &c0).unwrap();
        assert!((v2[0] - v[0] * 2.0).norm() < 1e-8);

        let allowed = Direction::new(q, c(-1.2, 0.5)).unwrap();
        assert!(alien_derivative(&m, &allowed, a, &c0).unwrap()[0].norm() < 1e-8);

        let f = vec![LaurentWindow::from_real(&ctx, -1, &[1.0, 0.5, 0.25]).unwrap()];
        let triv = m.with_u(two_slope_coupling(&f, 1, &m.a).unwrap()).unwrap();
        for (_, v) in alien_derivatives(&triv, a, &c0).unwrap() {
            assert!(v.norm() < 1e-7);
        }
    }

    #[test]
    fn dual_section_eval_matches_coefficients() {
        let ctx = ctx();
        let a = CMat::from_row_slice(2, 2, &[c(3.0, 0.0), c(1.0, 0.5), c(0.0, 0.0), c(-2.0, 1.0)]);
        let u = vec![LaurentWindow::zero(&ctx); 2];
        let m = TwoSlopeModule::new(2, a, u).unwrap();
        for (_, rows) in dual_sections(&m).unwrap() {
            for y in &rows {
                for z in [c(1.3, 0.2), c(-0.5, 1.1), c(0.2, -1.7)] {
                    let fast = y.eval(z).unwrap();
                    for (k, w) in y.coeffs.iter().enumerate() {
                        let v = w.eval(z).unwrap().value;
                        assert!((fast[k] - v).norm() < 1e-10 * v.norm().max(1.0), "{} {v}", fast[k]);
                    }
                }
            }
        }
    }

    #[test]
    fn residues_match_the_pairing() {
        let ctx = ctx();
        let q = ctx.q();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for d in 1..=3 {
            let a = rand_a(&mut rng, 2);
            let u: Vec<LaurentWindow> = (0..2).map(|_| rand_window(&mut rng, &ctx, -2, 4)).collect();
            let m = TwoSlopeModule::new(d, a, u).unwrap();
            let (_, rows) = dual_sections(&m).unwrap().remove(0);
            let y = &rows[1];
            let c1 = Direction::new(q, c(1.1, 0.3)).unwrap();
            let c2 = Direction::new(q, c(-0.4, 1.2)).unwrap();
            let (r1, r2) = residue_direction_independence(&m, y, &c1, &c2).unwrap();
            let p = serre_pairing(&y.coeffs, &m).unwrap().via_sum;
            let scale = p.norm().max(1.0);
            assert!((r1 - r2).norm() < 1e-7 * scale, "{r1} {r2}");
            assert!((r1 - p).norm() < 1e-7 * scale, "{r1} {p}");
        }
    }

    #[test]
    fn kernel_agreement_on_normal_forms() {
        let ctx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..6 {
            let r = rng.gen_range(1..=2);
            let d = rng.gen_range(1..=2);
            let a = rand_a(&mut rng, r);
            let u: Vec<LaurentWindow> = (0..r).map(|_| rand_window(&mut rng, &ctx, -3, 6)).collect();
            let m = TwoSlopeModule::new(d, a, u).unwrap();
            let nf = normal_form_two_slope(&m).unwrap().module;
            let b = borel_invariants(&nf).unwrap().max_abs();
            let s = serre_invariants(&nf).unwrap().max_abs();
            assert!(b > 1e-8 && s > 1e-8);
            // invariants depend only on the class
            let b0 = borel_invariants(&m).unwrap().flatten();
            let b1 = borel_invariants(&nf).unwrap().flatten();
            for k in 0..b0.len() {
                assert!((b0[k] - b1[k]).norm() < 1e-9 * b.max(1.0));
            }
        }
    }
}
