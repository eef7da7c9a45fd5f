//! Newton polygons of q-difference operators `L = a_n σⁿ + ⋯ + a_0`.
//!
//! Slopes are exact rationals. [`newton_polygon`] reads the lower convex hull
//! of the points `(i, v₀(a_i))`, which gives the slopes of the module
//! `D/D·L`. The module of the equation `L f = 0` is `D/D·L^∨`, so its slopes
//! come from the dual operator; see [`equation_slopes`].

use num_rational::Rational64;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::laurent::LaurentWindow;

#[derive(Debug, Clone)]
pub struct QDifferenceOperator {
    coeffs: Vec<LaurentWindow>,
}

impl QDifferenceOperator {
    /// `coeffs[i]` multiplies `σ^i`. The outer coefficients must be nonzero.
    pub fn new(coeffs: Vec<LaurentWindow>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Unsupported("operator has no coefficients".into()));
        }
        let ctx = *coeffs[0].context();
        if coeffs.iter().any(|c| *c.context() != ctx) {
            return Err(Error::ContextMismatch);
        }
        coeffs[0].valuation()?;
        coeffs[coeffs.len() - 1].valuation()?;
        Ok(Self { coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[LaurentWindow] {
        &self.coeffs
    }

    /// `L^∨ = Σ σ^{n-i}(a_i) σ^{n-i}`, the operator whose cyclic module is
    /// the module of the equation `L f = 0`.
    pub fn dual(&self) -> Self {
        let n = self.order();
        let mut out: Vec<LaurentWindow> = vec![LaurentWindow::zero(self.coeffs[0].context()); n + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            let mut b = a.clone();
            for _ in 0..(n - i) {
                b = b.sigma();
            }
            out[n - i] = b;
        }
        Self { coeffs: out }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewtonPolygon {
    /// `(μ, r)` pairs with strictly increasing `μ`.
    pub slopes: Vec<(Rational64, u32)>,
}

impl NewtonPolygon {
    pub fn new(slopes: Vec<(Rational64, u32)>) -> Result<Self> {
        if slopes.iter().any(|&(_, r)| r == 0) {
            return Err(Error::Unsupported("slope multiplicities must be positive".into()));
        }
        if slopes.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Unsupported("slopes must be strictly increasing".into()));
        }
        Ok(Self { slopes })
    }

    pub fn from_integers(slopes: &[(i64, u32)]) -> Result<Self> {
        Self::new(slopes.iter().map(|&(m, r)| (Rational64::from_integer(m), r)).collect())
    }

    pub fn rank(&self) -> u32 {
        self.slopes.iter().map(|s| s.1).sum()
    }

    /// `Σ_{i<j} r_i r_j (μ_j − μ_i)`.
    pub fn irregularity(&self) -> Rational64 {
        let mut acc = Rational64::zero();
        for (i, &(mi, ri)) in self.slopes.iter().enumerate() {
            for &(mj, rj) in &self.slopes[i + 1..] {
                acc += Rational64::from_integer(ri as i64 * rj as i64) * (mj - mi);
            }
        }
        acc
    }

    pub fn is_fuchsian(&self) -> bool {
        self.slopes.len() == 1 && self.slopes[0].0.is_zero()
    }

    /// Slopes of the dual module: `r(μ) ↦ r(−μ)`.
    pub fn dual(&self) -> Self {
        Self { slopes: self.slopes.iter().rev().map(|&(m, r)| (-m, r)).collect() }
    }
}

/// Lower convex hull of `{(i, v₀(a_i))}` read left to right.
pub fn newton_polygon(op: &QDifferenceOperator) -> Result<NewtonPolygon> {
    let mut points: Vec<(i64, i64)> = Vec::new();
    for (i, a) in op.coeffs.iter().enumerate() {
        match a.valuation() {
            Ok(v) => points.push((i as i64, v)),
            Err(Error::NumericallyZero) => continue,
            Err(e) => return Err(e),
        }
    }
    if points.len() < 2 {
        return Err(Error::Unsupported("degenerate operator: fewer than two nonzero coefficients".into()));
    }
    let mut hull: Vec<(i64, i64)> = Vec::new();
    for p in points {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross <= 0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let slopes = hull
        .windows(2)
        .map(|w| {
            let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            (Rational64::new(dy, dx), dx as u32)
        })
        .collect();
    NewtonPolygon::new(slopes)
}

/// Slopes of the module attached to the equation `L f = 0`, computed on the
/// dual operator.
pub fn equation_slopes(op: &QDifferenceOperator) -> Result<NewtonPolygon> {
    newton_polygon(&op.dual())
}

pub fn irregularity(np: &NewtonPolygon) -> Rational64 {
    np.irregularity()
}

pub fn is_fuchsian(np: &NewtonPolygon) -> bool {
    np.is_fuchsian()
}

pub fn format_slope(m: Rational64) -> String {
    if m.is_integer() {
        format!("{}", m.to_integer())
    } else if m.is_negative() {
        format!("-{}/{}", m.numer().abs(), m.denom())
    } else {
        format!("{}/{}", m.numer(), m.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laurent::NumericContext;
    use crate::linalg::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn r(n: i64) -> Rational64 {
        Rational64::from_integer(n)
    }

    fn ctx() -> NumericContext {
        NumericContext::real(2.0).unwrap()
    }

    fn poly(ctx: &NumericContext, start: i64, cs: &[f64]) -> LaurentWindow {
        LaurentWindow::from_real(ctx, start, cs).unwrap()
    }

    #[test]
    fn tschakaloff_dual_operator() {
        let ctx = ctx();
        // σ² − (1+z)σ + z
        let op = QDifferenceOperator::new(vec![poly(&ctx, 1, &[1.0]), poly(&ctx, 0, &[-1.0, -1.0]), poly(&ctx, 0, &[1.0])])
            .unwrap();
        let np = newton_polygon(&op).unwrap();
        assert_eq!(np.slopes, vec![(r(-1), 1), (r(0), 1)]);
        assert!(!np.is_fuchsian());
        assert_eq!(np.irregularity(), r(1));
    }

    #[test]
    fn tschakaloff_operator_and_its_dual() {
        let ctx = ctx();
        // L = qzσ² − (1+z)σ + 1
        let l = QDifferenceOperator::new(vec![poly(&ctx, 0, &[1.0]), poly(&ctx, 0, &[-1.0, -1.0]), poly(&ctx, 1, &[2.0])])
            .unwrap();
        assert_eq!(newton_polygon(&l).unwrap().slopes, vec![(r(0), 1), (r(1), 1)]);
        assert_eq!(equation_slopes(&l).unwrap().slopes, vec![(r(-1), 1), (r(0), 1)]);
        // L^∨ = σ² − (1+qz)σ + qz
        let dual = l.dual();
        assert_eq!(dual.coeffs()[2], poly(&ctx, 0, &[1.0]));
        assert_eq!(dual.coeffs()[1], poly(&ctx, 0, &[-1.0, -2.0]));
        assert_eq!(dual.coeffs()[0], poly(&ctx, 1, &[2.0]));
    }

    #[test]
    fn rank_one_operators() {
        let ctx = ctx();
        // σ − z³: D/D·L has slope −3, the equation σf = z³f has slope 3
        let op = QDifferenceOperator::new(vec![poly(&ctx, 3, &[-1.0]), poly(&ctx, 0, &[1.0])]).unwrap();
        assert_eq!(newton_polygon(&op).unwrap().slopes, vec![(r(-3), 1)]);
        assert_eq!(equation_slopes(&op).unwrap().slopes, vec![(r(3), 1)]);

        let op = QDifferenceOperator::new(vec![poly(&ctx, 0, &[-1.0]), poly(&ctx, 0, &[1.0])]).unwrap();
        let np = newton_polygon(&op).unwrap();
        assert_eq!(np.slopes, vec![(r(0), 1)]);
        assert!(np.is_fuchsian());
        assert_eq!(np.irregularity(), r(0));
    }

    #[test]
    fn rational_slopes() {
        let ctx = ctx();
        // σ² − z: single edge (2, −1)
        let op = QDifferenceOperator::new(vec![poly(&ctx, 1, &[-1.0]), LaurentWindow::zero(&ctx), poly(&ctx, 0, &[1.0])])
            .unwrap();
        let np = newton_polygon(&op).unwrap();
        assert_eq!(np.slopes, vec![(Rational64::new(-1, 2), 2)]);
        assert_eq!(format_slope(np.slopes[0].0), "-1/2");
    }

    #[test]
    fn irregularity_examples() {
        let np = NewtonPolygon::from_integers(&[(0, 2), (1, 1), (3, 1)]).unwrap();
        assert_eq!(np.irregularity(), r(10));
        assert!(NewtonPolygon::from_integers(&[(0, 3)]).unwrap().is_fuchsian());
        assert!(!NewtonPolygon::from_integers(&[(1, 2)]).unwrap().is_fuchsian());
        assert!(NewtonPolygon::from_integers(&[(1, 1), (0, 1)]).is_err());
    }

    #[test]
    fn degenerate_operator() {
        let ctx = ctx();
        assert!(QDifferenceOperator::new(vec![LaurentWindow::zero(&ctx), poly(&ctx, 0, &[1.0])]).is_err());
        assert!(QDifferenceOperator::new(vec![poly(&ctx, 0, &[1.0])])
            .and_then(|op| newton_polygon(&op))
            .is_err());
    }

    #[test]
    fn multiplicities_sum_to_order() {
        let ctx = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.gen_range(1..7);
            let coeffs: Vec<LaurentWindow> = (0..=n)
                .map(|i| {
                    if i != 0 && i != n && rng.gen_bool(0.3) {
                        LaurentWindow::zero(&ctx)
                    } else {
                        let v = rng.gen_range(-5..6);
                        LaurentWindow::monomial(&ctx, v, c(rng.gen_range(0.5..2.0), 0.0))
                    }
                })
                .collect();
            let op = QDifferenceOperator::new(coeffs).unwrap();
            let np = newton_polygon(&op).unwrap();
            assert_eq!(np.rank() as usize, op.order());
            assert_eq!(equation_slopes(&op).unwrap(), np.dual());
        }
    }
}
