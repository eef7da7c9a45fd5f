//! One line per acceptance criterion. Each criterion runs its property suite
//! at seed 7 and, where closed-form values exist, checks them directly.

use num_complex::Complex64;
use std::process::ExitCode;

use qstokes::elliptic;
use qstokes::invariants;
use qstokes::laurent::{LaurentWindow, NumericContext};
use qstokes::linalg::c;
use qstokes::newton::{self, NewtonPolygon, QDifferenceOperator};
use qstokes::special;
use qstokes::suite::{self, SuiteReport, MODULI};
use qstokes::summation::Direction;

const SEED: u64 = 7;

fn poly(ctx: &NumericContext, start: i64, cs: &[f64]) -> LaurentWindow {
    LaurentWindow::from_real(ctx, start, cs).unwrap()
}

/// `θ_q(−1) = 0`, checked against the `f64` value of the series.
fn theta_zero() -> (bool, String) {
    let worst = MODULI
        .iter()
        .map(|&q| special::theta_series(c(q, 0.0), c(-1.0, 0.0)).unwrap().norm())
        .fold(0.0, f64::max);
    (worst < 1e-12, format!("max |theta_q(-1)| = {worst:.1e}"))
}

fn newton_values() -> (bool, String) {
    let ctx = NumericContext::real(2.0).unwrap();
    let dual = QDifferenceOperator::new(vec![poly(&ctx, 1, &[1.0]), poly(&ctx, 0, &[-1.0, -1.0]), poly(&ctx, 0, &[1.0])])
        .unwrap();
    let l = QDifferenceOperator::new(vec![poly(&ctx, 0, &[1.0]), poly(&ctx, 0, &[-1.0, -1.0]), poly(&ctx, 1, &[2.0])])
        .unwrap();
    let ok = newton::newton_polygon(&dual).unwrap() == NewtonPolygon::from_integers(&[(-1, 1), (0, 1)]).unwrap()
        && newton::newton_polygon(&l).unwrap() == NewtonPolygon::from_integers(&[(0, 1), (1, 1)]).unwrap();
    (ok, "sigma^2-(1+z)sigma+z -> (-1,1),(0,1); qz sigma^2-(1+z)sigma+1 -> (0,1),(1,1)".into())
}

fn phi_values() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for &qr in &MODULI {
        let q = c(qr, 0.0);
        let r = (-q).sqrt();
        let cases = [((c(0.0, 0.0), c(1.0, 0.0)), [c(0.0, 1.0), c(0.0, -1.0)]), ((c(1.0, 0.0), c(0.0, 0.0)), [r, -r])];
        for ((u0, u1), expect) in cases {
            let zeros = elliptic::phi_zeros(q, u0, u1).unwrap();
            for e in &expect {
                let d = Direction::new(q, *e).unwrap();
                let near = zeros.iter().map(|z| z.distance(&d) / d.rep().norm()).fold(f64::INFINITY, f64::min);
                worst = worst.max(near);
            }
            if zeros.len() != 2 {
                worst = f64::INFINITY;
            }
        }
    }
    (worst < 1e-8, format!("phi zeros at (0,1) and (1,0): worst distance {worst:.1e}"))
}

fn tschakaloff_transform() -> (bool, String) {
    let ctx = NumericContext::new(c(2.0, 0.0), -60, 60, 1e-12, 1e-300).unwrap();
    let q = ctx.q();
    // Σ q^{n(n−1)/2} zⁿ, then the coefficient product with t_{-n} q^{-n} directly
    let tsch = LaurentWindow::from_fn(&ctx, |n| if (0..=30).contains(&n) { q.powi((n * (n - 1) / 2) as i32) } else { c(0.0, 0.0) });
    let b = invariants::q_borel(&tsch, 1).unwrap();
    let mut worst: f64 = 0.0;
    for n in 0..=30 {
        let expect: Complex64 = q.powi(-(n as i32));
        worst = worst.max((b.coeff(n) - expect).norm() / expect.norm());
    }
    (worst < 1e-12, format!("Tschakaloff q-Borel vs q^-n: {worst:.1e}"))
}

fn summary(r: &SuiteReport) -> String {
    if let Some(e) = &r.error {
        return format!("error: {e}");
    }
    r.checks
        .iter()
        .map(|k| format!("{} {:.1e}/{:.0e}{}", k.label, k.worst, k.limit, if k.passed { "" } else { " FAILED" }))
        .collect::<Vec<_>>()
        .join("; ")
}

fn main() -> ExitCode {
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let reports = suite::run_all(SEED, jobs).expect("suite thread pool");
    let extra: [Option<(bool, String)>; 11] = [
        Some(theta_zero()),
        Some(newton_values()),
        None,
        None,
        None,
        None,
        None,
        Some(phi_values()),
        None,
        None,
        Some(tschakaloff_transform()),
    ];
    let mut failed = 0;
    for (r, x) in reports.iter().zip(extra) {
        let (xok, xmsg) = x.map_or((true, String::new()), |(ok, m)| (ok, format!(" | {m}")));
        let ok = r.passed && xok;
        failed += usize::from(!ok);
        println!("criterion {:>2} {} {}: {}{}", r.id, if ok { "PASS" } else { "FAIL" }, r.name, summary(r), xmsg);
    }
    println!("{} of {} criteria passed", reports.len() - failed, reports.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
