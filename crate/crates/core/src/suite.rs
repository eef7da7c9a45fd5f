//! Seeded property suites with fixed tolerances, shared by the
//! `verify-suite` command and the acceptance test target.
//!
//! Each suite returns a [`SuiteReport`] listing the worst observed value of
//! every check next to its limit.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::TAU;
use std::sync::Arc;
use std::time::Instant;

use crate::connection::{self, GlobalFuchsianSystem};
use crate::elliptic::{self, Family1Class, ScalarFn};
use crate::error::{Error, Result};
use crate::invariants;
use crate::laurent::{LaurentWindow, NumericContext};
use crate::linalg::{self, c, CMat, ONE, ZERO};
use crate::newton::{self, NewtonPolygon, QDifferenceOperator};
use crate::qmodule::{self, GaugeTransform, MatrixWindow, TwoSlopeModule};
use crate::special;
use crate::summation::{self, Direction, Summator};

/// The moduli every suite cycles through.
pub const MODULI: [f64; 3] = [1.5, 2.0, 4.0];
/// Size of the random two-slope module suite.
pub const MODULE_COUNT: usize = 50;
/// Wall-clock budget per suite, in seconds.
pub const TIME_BUDGET: f64 = 60.0;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub label: String,
    /// Worst observed value; for exact checks, the number of mismatches.
    pub worst: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub seconds: f64,
    pub checks: Vec<Check>,
    /// Set when the suite aborted on an error.
    pub error: Option<String>,
}

/// Accumulates the worst value of one check.
struct Worst {
    label: String,
    limit: f64,
    worst: f64,
    strict: bool,
}

impl Worst {
    /// Passes when `worst < limit`.
    fn below(label: impl Into<String>, limit: f64) -> Self {
        Self { label: label.into(), limit, worst: 0.0, strict: true }
    }

    /// Counts failures; passes when none occurred.
    fn count(label: impl Into<String>) -> Self {
        Self { label: label.into(), limit: 0.0, worst: 0.0, strict: false }
    }

    fn see(&mut self, v: f64) {
        // NaN must not pass silently
        if v.is_nan() || v > self.worst {
            self.worst = if v.is_nan() { f64::INFINITY } else { v };
        }
    }

    fn fail_if(&mut self, bad: bool) {
        if bad {
            self.worst += 1.0;
        }
    }

    fn done(self) -> Check {
        let passed = if self.strict { self.worst < self.limit } else { self.worst <= self.limit };
        Check { label: self.label, worst: self.worst, limit: self.limit, passed }
    }
}

/// Label of the wall-clock check appended to every report.
pub const SECONDS_LABEL: &str = "seconds";

pub const SUITE_NAMES: [&str; 11] = [
    "theta identities",
    "newton polygons",
    "summation correctness",
    "cocycle laws",
    "invariant completeness",
    "three-way invariant agreement",
    "serre lemma and residues",
    "stability families",
    "fuchsian round trip",
    "birkhoff connection",
    "q-borel mechanics",
];

/// Runs suite `id` (1-based).
pub fn run_suite(id: u32, seed: u64) -> SuiteReport {
    let start = Instant::now();
    let body: Result<Vec<Check>> = match id {
        1 => theta_suite(seed),
        2 => newton_suite(),
        3 => summation_suite(seed),
        4 => cocycle_suite(seed),
        5 => completeness_suite(seed),
        6 => agreement_suite(seed),
        7 => serre_suite(seed),
        8 => stability_suite(seed),
        9 => fuchsian_suite(seed),
        10 => connection_suite(seed),
        11 => borel_suite(),
        _ => Err(Error::Unsupported(format!("no suite {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let name = SUITE_NAMES.get(id.wrapping_sub(1) as usize).copied().unwrap_or("unknown");
    match body {
        Ok(mut checks) => {
            checks.push(Worst::below(SECONDS_LABEL, TIME_BUDGET).tap(seconds));
            let passed = checks.iter().all(|c| c.passed);
            SuiteReport { id, name, passed, seconds, checks, error: None }
        }
        Err(e) => SuiteReport { id, name, passed: false, seconds, checks: vec![], error: Some(format!("{}: {e}", e.kind())) },
    }
}

impl Worst {
    fn tap(mut self, v: f64) -> Check {
        self.see(v);
        self.done()
    }
}

/// All suites, on at most `jobs` threads, in id order.
pub fn run_all(seed: u64, jobs: usize) -> Result<Vec<SuiteReport>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (1..=11u32).into_par_iter().map(|id| run_suite(id, seed)).collect()))
}

pub fn rng_for(seed: u64, suite: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ suite)
}

fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// A point with `log_|q| |z|` uniform in `[lo, hi)`.
fn rand_point(rng: &mut ChaCha8Rng, q: Complex64, lo: f64, hi: f64) -> Complex64 {
    Complex64::from_polar(q.norm().powf(rng.gen_range(lo..hi)), rng.gen_range(0.0..TAU))
}

fn rand_window(rng: &mut ChaCha8Rng, ctx: &NumericContext, lo: i64, len: usize) -> Result<LaurentWindow> {
    let cs: Vec<Complex64> = (0..len).map(|_| rand_c(rng)).collect();
    LaurentWindow::from_coeffs(ctx, lo, &cs)
}

/// Well-conditioned matrix whose eigenvalue ratios avoid `q^ℤ`.
pub fn random_matrix(rng: &mut ChaCha8Rng, q: Complex64, r: usize) -> Result<CMat> {
    for _ in 0..1000 {
        let m = CMat::from_fn(r, r, |_, _| rand_c(rng)) + linalg::identity(r) * c(2.0, 0.5);
        if linalg::condition_number(&m) < 50.0
            && qmodule::check_non_resonant(q, &m, 64).is_ok()
            && linalg::eigen(&m).is_ok()
        {
            return Ok(m);
        }
    }
    Err(Error::Unsupported("no admissible random matrix found".into()))
}

#[derive(Debug, Clone)]
pub struct SuiteModule {
    pub module: TwoSlopeModule,
    /// Built as a coboundary, so its class is trivial.
    pub trivial: bool,
}

/// Random two-slope module with `r, d ∈ 1..=3`; trivial ones have
/// `U = σ_q F − z^{-d} A F` for a random Laurent polynomial `F`.
pub fn random_module(rng: &mut ChaCha8Rng, ctx: &NumericContext, trivial: bool) -> Result<TwoSlopeModule> {
    let r = rng.gen_range(1..=3usize);
    let d = rng.gen_range(1..=3u32);
    let a = random_matrix(rng, ctx.q(), r)?;
    let u = if trivial {
        let f = (0..r).map(|_| rand_window(rng, ctx, -2, 5)).collect::<Result<Vec<_>>>()?;
        qmodule::two_slope_coupling(&f, d, &a)?
    } else {
        (0..r).map(|_| rand_window(rng, ctx, -3, 7)).collect::<Result<Vec<_>>>()?
    };
    TwoSlopeModule::new(d, a, u)
}

/// `count` modules, alternating nontrivial and trivial, cycling the moduli.
pub fn module_suite(seed: u64, count: usize) -> Result<Vec<SuiteModule>> {
    let mut rng = rng_for(seed, 1000);
    (0..count)
        .map(|k| {
            let ctx = NumericContext::real(MODULI[k % 3])?;
            let trivial = k % 2 == 1;
            Ok(SuiteModule { module: random_module(&mut rng, &ctx, trivial)?, trivial })
        })
        .collect()
}

/// An allowed direction at gap at least `1e-3`.
pub fn random_direction(rng: &mut ChaCha8Rng, s: &Summator) -> Result<Direction> {
    let q = s.module().context().q();
    for _ in 0..1000 {
        let cc = rand_point(rng, q, 0.0, 1.0);
        if s.gap(cc) > 1e-3 {
            return Direction::new(q, cc);
        }
    }
    Err(Error::Unsupported("no allowed direction found".into()))
}

/// Least acceptable `(|θ|/Σ|t_n wⁿ|)^d` at sample points: keeps about ten
/// significant digits in values of summed gauges.
pub const SAMPLE_CONDITIONING: f64 = 1e-6;

/// A point of the fundamental annulus where `θ_q(z/c)^d` is well conditioned
/// for every `c` listed.
pub fn conditioned_point(rng: &mut ChaCha8Rng, q: Complex64, cs: &[Complex64], d: u32) -> Result<Complex64> {
    try_conditioned_point(rng, q, cs, d, 10_000)?
        .ok_or_else(|| Error::Unsupported("no well-conditioned sample point found".into()))
}

fn try_conditioned_point(rng: &mut ChaCha8Rng, q: Complex64, cs: &[Complex64], d: u32, tries: usize) -> Result<Option<Complex64>> {
    'draw: for _ in 0..tries {
        let z = rand_point(rng, q, 0.0, 1.0);
        for &cc in cs {
            if summation::theta_conditioning(q, cc, z)?.powi(d as i32) < SAMPLE_CONDITIONING {
                continue 'draw;
            }
        }
        return Ok(Some(z));
    }
    Ok(None)
}

/// The best of `tries` random points of the annulus, by the worst theta
/// conditioning over `cs`.
fn best_conditioned_point(rng: &mut ChaCha8Rng, q: Complex64, cs: &[Complex64], tries: usize) -> Result<Complex64> {
    let mut best = (f64::NEG_INFINITY, ZERO);
    for _ in 0..tries {
        let z = rand_point(rng, q, 0.0, 1.0);
        let mut worst = f64::INFINITY;
        for &cc in cs {
            worst = worst.min(summation::theta_conditioning(q, cc, z)?);
        }
        if worst > best.0 {
            best = (worst, z);
        }
    }
    Ok(best.1)
}

fn theta_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 1);
    let mut triple = Worst::below("series vs triple product (relative)", 1e-10);
    // scaled by |z| Σ|t_n z^n| = |z| θ_|q|(|z|); plain relative error is ill-posed next to zeros
    let mut fe = Worst::below("theta(qz) - z theta(z) (scaled by |z| theta_|q|(|z|))", 1e-12);
    let mut zero = Worst::below("|theta(-1)|", 1e-12);
    for &qr in &MODULI {
        let q = c(qr, 0.0);
        for _ in 0..100 {
            let z = rand_point(&mut rng, q, -1.5, 1.5);
            let s = special::theta_series(q, z)?;
            let t = special::theta_triple(q, z)?;
            triple.see((s - t).norm() / s.norm());
            let lhs = special::theta_series(q, q * z)?;
            let mag = special::theta_series(c(qr, 0.0), c(z.norm(), 0.0))?.norm() * z.norm();
            fe.see((lhs - z * s).norm() / mag);
        }
        zero.see(special::theta_series(q, c(-1.0, 0.0))?.norm());
    }
    Ok(vec![triple.done(), fe.done(), zero.done()])
}

fn poly(ctx: &NumericContext, coeffs: &[f64]) -> Result<LaurentWindow> {
    LaurentWindow::from_real(ctx, 0, coeffs)
}

fn newton_suite() -> Result<Vec<Check>> {
    let ctx = NumericContext::real(2.0)?;
    let mut tsch = Worst::count("sigma^2 - (1+z) sigma + z slopes");
    let op = QDifferenceOperator::new(vec![poly(&ctx, &[0.0, 1.0])?, poly(&ctx, &[-1.0, -1.0])?, poly(&ctx, &[1.0])?])?;
    tsch.fail_if(newton::newton_polygon(&op)? != NewtonPolygon::from_integers(&[(-1, 1), (0, 1)])?);
    let mut mono = Worst::count("sigma - z^mu slopes, mu in -2..=3");
    for mu in -2..=3i64 {
        let a0 = LaurentWindow::monomial(&ctx, mu, c(-1.0, 0.0));
        let op = QDifferenceOperator::new(vec![a0, LaurentWindow::constant(&ctx, ONE)])?;
        mono.fail_if(newton::equation_slopes(&op)? != NewtonPolygon::from_integers(&[(mu, 1)])?);
    }
    Ok(vec![tsch.done(), mono.done()])
}

fn summation_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 3);
    let mut res = Worst::below("sum residual |sigma F - z^-d A F - U| (scaled)", 1e-8);
    let mut cert = Worst::count("entire-part decay certificate failures");
    for sm in module_suite(seed, MODULE_COUNT)? {
        let m = &sm.module;
        let q = m.context().q();
        let s = Summator::new(m)?;
        let dir = random_direction(&mut rng, &s)?;
        let f = s.sum_direction(&dir)?;
        cert.fail_if(!f.decay_certificate());
        for _ in 0..20 {
            let z = conditioned_point(&mut rng, q, &[f.c], m.d)?;
            res.see(summation::summation_residual(m, &f, z)?);
        }
    }
    Ok(vec![res.done(), cert.done()])
}

fn cocycle_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 4);
    let mut diag = Worst::below("|F_{c,c}|", 1e-12);
    let mut add = Worst::below("F_{c,e} - F_{c,d} - F_{d,e} (relative)", 1e-12);
    let mut hom = Worst::below("homogeneous residual of F_{c,d}", 1e-8);
    for sm in module_suite(seed, MODULE_COUNT)? {
        let m = &sm.module;
        let q = m.context().q();
        let s = Summator::new(m)?;
        // near |q| = 1 the bad bands of three directions can cover the whole
        // annulus; such triples leave nothing to sample and are redrawn
        let mut dirs = None;
        for _ in 0..100 {
            let t = [random_direction(&mut rng, &s)?, random_direction(&mut rng, &s)?, random_direction(&mut rng, &s)?];
            let reps: Vec<Complex64> = t.iter().map(|d| d.rep()).collect();
            if try_conditioned_point(&mut rng, q, &reps, m.d, 2_000)?.is_some() {
                dirs = Some(t);
                break;
            }
        }
        let dirs = dirs.ok_or_else(|| Error::Unsupported("no direction triple with a well-conditioned sample".into()))?;
        let sums = dirs.iter().map(|d| s.sum_direction(d)).collect::<Result<Vec<_>>>()?;
        let reps: Vec<Complex64> = sums.iter().map(|f| f.c).collect();
        let cocycle = |i: usize, j: usize| summation::StokesCocycle { from: sums[i].clone(), to: sums[j].clone() };
        for _ in 0..5 {
            let z = conditioned_point(&mut rng, q, &reps, m.d)?;
            diag.see(cocycle(0, 0).eval(z)?.norm());
            let ce = cocycle(0, 2).eval(z)?;
            let sum = cocycle(0, 1).eval(z)? + cocycle(1, 2).eval(z)?;
            let scale = sums.iter().map(|f| f.eval(z).map(|v| v.norm())).collect::<Result<Vec<_>>>()?;
            let scale = scale.into_iter().fold(1.0, f64::max);
            add.see((ce - sum).norm() / scale);
            hom.see(summation::cocycle_residual(m, &cocycle(0, 1), z)?);
        }
    }
    Ok(vec![diag.done(), add.done(), hom.done()])
}

fn completeness_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rank = Worst::below("sigma_max / sigma_min of the coordinate map", 1e8);
    let mut triv = Worst::below("Borel invariants of trivial classes / |U|", 1e-8);
    let mut size = Worst::count("coordinate map size != r d");
    for sm in module_suite(seed, MODULE_COUNT)? {
        let m = &sm.module;
        let map = invariants::borel_coordinate_map(m.context(), m.d, &m.a)?;
        size.fail_if(map.nrows() != m.rank() * m.d as usize || map.ncols() != map.nrows());
        let sv = map.singular_values();
        rank.see(sv.max() / sv.min());
        if sm.trivial {
            triv.see(invariants::borel_invariants(m)?.max_abs() / m.u_norm().max(1.0));
        }
    }
    Ok(vec![rank.done(), triv.done(), size.done()])
}

/// Alien derivatives at every forbidden point, retrying the base point when
/// it falls on a spiral.
fn alien_all(rng: &mut ChaCha8Rng, s: &Summator) -> Result<Vec<Complex64>> {
    let q = s.module().context().q();
    let mut last = None;
    for _ in 0..8 {
        let c0 = random_direction(rng, s)?;
        let pts = summation::forbidden_set(s.module())?;
        let mut cs: Vec<Complex64> = pts.points.iter().map(|p| p.direction.rep()).collect();
        cs.push(c0.rep());
        let a = best_conditioned_point(rng, q, &cs, 200)?;
        let out: Result<Vec<Complex64>> = pts
            .points
            .iter()
            .map(|p| invariants::alien_derivative_with(s, &p.direction, a, &c0).map(|v| v.iter().cloned().collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()
            .map(|v| v.into_iter().flatten().collect());
        match out {
            Err(e @ Error::Contour(_)) => last = Some(e),
            other => return other,
        }
    }
    Err(last.unwrap_or_else(|| Error::Contour("no usable base point".into())))
}

fn agreement_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 6);
    let mut mismatch = Worst::count("zero patterns of Borel / Serre / alien disagree");
    let mut wrong = Worst::count("zero pattern differs from construction");
    let mut triv_b = Worst::below("trivial: Borel / |U|", 1e-8);
    let mut triv_s = Worst::below("trivial: Serre / |U|", 1e-8);
    let mut triv_a = Worst::below("trivial: alien / |U|", 1e-6);
    for sm in module_suite(seed, MODULE_COUNT)? {
        let m = &sm.module;
        let scale = m.u_norm().max(1.0);
        let b = invariants::borel_invariants(m)?.max_abs() / scale;
        let sv = invariants::serre_invariants(m)?.max_abs() / scale;
        let s = Summator::new(m)?;
        let al = alien_all(&mut rng, &s)?.iter().fold(0.0, |x: f64, z| x.max(z.norm())) / scale;
        let zeros = [b < 1e-8, sv < 1e-8, al < 1e-6];
        mismatch.fail_if(zeros.iter().any(|&z| z != zeros[0]));
        wrong.fail_if(zeros[0] != sm.trivial);
        if sm.trivial {
            triv_b.see(b);
            triv_s.see(sv);
            triv_a.see(al);
        }
    }
    Ok(vec![mismatch.done(), wrong.done(), triv_b.done(), triv_s.done(), triv_a.done()])
}

/// Smallest relative distance between the two pole classes of a test quotient.
const POLE_SEPARATION: f64 = 0.2;

fn theta_quotient(q: Complex64, a: Complex64, b: Complex64) -> ScalarFn {
    Arc::new(move |z: Complex64| {
        let den = special::theta_series(q, z / a)? * special::theta_series(q, z / b)?;
        if den == ZERO {
            return Err(Error::Pole { z });
        }
        Ok(special::theta_series(q, z)? * special::theta_series(q, z / (a * b))? / den)
    })
}

fn serre_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 7);
    let mut pair = Worst::below("product vs sum pairing (relative)", 1e-12);
    let mut indep = Worst::below("residue at -c vs -c' (relative)", 1e-7);
    let mut ressum = Worst::below("elliptic residue sum (scaled)", 1e-7);
    let mut poles = Worst::count("balanced quotients without exactly 2 poles");
    for (k, sm) in module_suite(seed, MODULE_COUNT)?.into_iter().enumerate() {
        let m = &sm.module;
        let sections = invariants::dual_sections(m)?;
        for (_, rows) in &sections {
            for row in rows {
                let p = invariants::serre_pairing(&row.coeffs, m)?;
                pair.see(p.difference / p.via_sum.norm().max(1.0));
            }
        }
        // z-residues are costlier; a fifth of the modules suffices
        if k % 5 == 0 {
            let s = Summator::new(m)?;
            let (c1, c2) = (random_direction(&mut rng, &s)?, random_direction(&mut rng, &s)?);
            let row = &sections[0].1[0];
            let (r1, r2) = invariants::residue_direction_independence(m, row, &c1, &c2)?;
            indep.see((r1 - r2).norm() / r1.norm().max(1.0));
        }
    }
    for k in 0..20 {
        let q = c(MODULI[k % 3], 0.0);
        let a = rand_point(&mut rng, q, 0.05, 0.95);
        // poles closer than the locator grid merge into one
        let mut b = rand_point(&mut rng, q, 0.05, 0.95);
        while Direction::new(q, a)?.distance(&Direction::new(q, b)?) < POLE_SEPARATION * a.norm() {
            b = rand_point(&mut rng, q, 0.05, 0.95);
        }
        let probe = elliptic::EllipticProbe::new(q, theta_quotient(q, a, b))?;
        let rs = elliptic::residue_sum(&probe)?;
        poles.fail_if(rs.poles.len() != 2);
        let scale = rs.poles.iter().map(|p| p.1.norm()).fold(1.0, f64::max);
        ressum.see(rs.total.norm() / scale);
    }
    Ok(vec![pair.done(), indep.done(), ressum.done(), poles.done()])
}

fn class_distance(zs: &[Direction], p: Complex64) -> Result<f64> {
    let d = Direction::new(zs[0].q(), p)?;
    Ok(zs.iter().map(|z| z.distance(&d) / d.rep().norm()).fold(f64::INFINITY, f64::min))
}

fn stability_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 8);
    let mut special_zeros = Worst::below("phi zeros {±i}, {±sqrt(-q)} (relative distance)", 1e-8);
    let mut counts = Worst::count("phi_u zero count != 2");
    let mut fact = Worst::below("psi factorization (relative)", 1e-9);
    let mut psi_eq = Worst::below("psi(a) + u1/u0 at zeros of phi_u", 1e-8);
    let mut class = Worst::count("family 1: Split != trivial class");
    let i = c(0.0, 1.0);
    for &qr in &MODULI {
        let q = c(qr, 0.0);
        let zs = elliptic::phi_zeros(q, ZERO, ONE)?;
        counts.fail_if(zs.len() != 2);
        special_zeros.see(class_distance(&zs, i)?.max(class_distance(&zs, -i)?));
        let zs = elliptic::phi_zeros(q, ONE, ZERO)?;
        counts.fail_if(zs.len() != 2);
        let s = (-q).sqrt();
        special_zeros.see(class_distance(&zs, s)?.max(class_distance(&zs, -s)?));
        for _ in 0..20 {
            let a = rand_point(&mut rng, q, 0.05, 0.95);
            let (x, y) = elliptic::psi_factorization_check(q, a)?;
            fact.see((x - y).norm() / x.norm());
        }
    }
    for k in 0..50 {
        let q = c(MODULI[k % 2], 0.0);
        let (u0, u1) = (rand_c(&mut rng), rand_c(&mut rng));
        let zs = elliptic::phi_zeros(q, u0, u1)?;
        counts.fail_if(zs.len() != 2);
        for z in &zs {
            psi_eq.see((elliptic::psi(q, z.rep())? + u1 / u0).norm());
        }
    }
    let ctx = NumericContext::real(2.0)?;
    let unit = CMat::from_element(1, 1, ONE);
    for k in 0..20 {
        let trivial = k % 2 == 0;
        let u = if k == 0 {
            LaurentWindow::zero(&ctx)
        } else if k == 1 {
            LaurentWindow::constant(&ctx, ONE)
        } else if trivial {
            // u = z·(σF − z^{-1}F) is a coboundary of the level-one module
            let f = vec![rand_window(&mut rng, &ctx, -2, 5)?];
            qmodule::two_slope_coupling(&f, 1, &unit)?.remove(0).shift(1)
        } else {
            rand_window(&mut rng, &ctx, -3, 7)?
        };
        let got = elliptic::classify_family1(&u)?.class;
        class.fail_if((got == Family1Class::Split) != trivial);
    }
    Ok(vec![special_zeros.done(), counts.done(), fact.done(), psi_eq.done(), class.done()])
}

fn fuchsian_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 9);
    let mut a0_err = Worst::below("recovered A0 (relative)", 1e-9);
    let mut f_err = Worst::below("recovered F = I + zC (relative)", 1e-9);
    let mut resonant = Worst::count("resonant inputs accepted");
    for k in 0..30 {
        let q = c(MODULI[k % 3], 0.0);
        let ctx = NumericContext::new(q, -60, 60, 1e-12, 1e-300)?;
        let r = 2 + k % 2;
        let a0 = random_matrix(&mut rng, q, r)?;
        let cm = CMat::from_fn(r, r, |_, _| rand_c(&mut rng)) * c(0.25, 0.0);
        let f = GaugeTransform::new(MatrixWindow::from_terms(&ctx, &[(0, linalg::identity(r)), (1, cm.clone())])?)?;
        let a = qmodule::gauge_apply(&f, &MatrixWindow::constant(&ctx, &a0))?;
        let red = qmodule::fuchsian_reduce(&a)?;
        a0_err.see(linalg::max_abs(&(&red.a0 - &a0)) / linalg::max_abs(&a0));
        let g = red.f.matrix();
        let mut e = linalg::max_abs(&(g.coeff(1) - &cm)) + linalg::max_abs(&(g.coeff(0) - linalg::identity(r)));
        for n in 2..=20 {
            e = e.max(linalg::max_abs(&g.coeff(n)));
        }
        f_err.see(e / linalg::max_abs(&cm));

        let lambda = c(1.0 + rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0));
        let n = rng.gen_range(1..4);
        let res = linalg::diag(&[lambda, lambda * q.powi(n)]);
        let bad = MatrixWindow::from_terms(&ctx, &[(0, res), (1, CMat::from_fn(2, 2, |_, _| rand_c(&mut rng)))])?;
        resonant.fail_if(!matches!(qmodule::fuchsian_reduce(&bad), Err(Error::Resonant { .. })));
    }
    Ok(vec![a0_err.done(), f_err.done(), resonant.done()])
}

fn connection_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_for(seed, 10);
    let mut ident = Worst::below("constant systems: |P - I|", 1e-12);
    let mut cdef = Worst::below("constant systems: ellipticity defect", 1e-12);
    let mut rdef = Worst::below("rank-2 one-pole systems: ellipticity defect (relative)", 1e-7);
    let mut det = Worst::count("rank-2: samples with |det P| <= 1e-8");
    let mut sparse = Worst::count("rank-2: systems with fewer than 20 usable samples");
    for (k, &qr) in MODULI.iter().cycle().take(15).enumerate() {
        let ctx = NumericContext::real(qr)?;
        let q = ctx.q();
        let samples = connection::annulus_samples(q, 30);
        if k < 6 {
            let cm = random_matrix(&mut rng, q, 2)?;
            let p = connection::birkhoff_connection(&GlobalFuchsianSystem::constant(&ctx, &cm)?)?;
            for &z in &samples {
                ident.see(linalg::max_abs(&(p.eval(z)? - linalg::identity(2))));
            }
            cdef.see(connection::connection_ellipticity_report(&|z| p.eval(z), q, &samples).max_defect);
        }
        let a0 = random_matrix(&mut rng, q, 2)?;
        let ainf = random_matrix(&mut rng, q, 2)?;
        let pole = rand_point(&mut rng, q, -1.0, 1.0);
        let sys = GlobalFuchsianSystem::one_pole(&ctx, &a0, &ainf, pole)?;
        let p = connection::birkhoff_connection(&sys)?;
        let rep = connection::connection_ellipticity_report(&|z| p.eval(z), q, &samples);
        rdef.see(rep.relative);
        sparse.fail_if(rep.evaluated < 20);
        for &z in &samples {
            if let Ok(d) = p.det(z) {
                det.fail_if(d.norm() <= 1e-8);
            }
        }
    }
    Ok(vec![ident.done(), cdef.done(), rdef.done(), det.done(), sparse.done()])
}

fn borel_suite() -> Result<Vec<Check>> {
    let mut rec = Worst::below("q^n t_n - t_{n-d} (relative)", 1e-12);
    let mut tsch = Worst::below("Tschakaloff transform vs q^-n (relative)", 1e-12);
    for &qr in &MODULI {
        let ctx = NumericContext::real(qr)?;
        let q = ctx.q();
        for d in 1..=3u32 {
            let t = special::t_coeffs(&ctx, d)?;
            for n in ctx.n_min() + d as i64..=ctx.n_max() {
                let (a, b) = (q.powi(n as i32) * t.t(n), t.t(n - d as i64));
                if a == ZERO || b == ZERO || !a.is_finite() {
                    continue;
                }
                rec.see((a - b).norm() / b.norm());
            }
        }
        // f_n = q^{n(n−1)/2}; the level-one transform weights by q^{-n} t_{-n}
        let top = (600.0 / qr.log10()).sqrt() as i64;
        let f = LaurentWindow::from_fn(&ctx, |n| if (0..=top).contains(&n) { q.powf((n * (n - 1)) as f64 / 2.0) } else { ZERO });
        let b = invariants::q_borel(&f, 1)?;
        for n in 0..=top {
            let expect = q.powi(-(n as i32));
            tsch.see((b.coeff(n) - expect).norm() / expect.norm());
        }
    }
    Ok(vec![rec.done(), tsch.done()])
}
