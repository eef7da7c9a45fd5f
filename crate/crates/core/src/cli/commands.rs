use num_complex::Complex64;
use num_rational::Rational64;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::output::{c, cmat, cvec, Csv};
use super::CliError;
use crate::connection::{self, SystemJson};
use crate::elliptic::{self, Family1Class};
use crate::invariants::{self, InvariantVector};
use crate::laurent::{LaurentJson, NumericContext};
use crate::newton::{self, NewtonPolygon, QDifferenceOperator};
use crate::qmodule::{normal_form_two_slope, TwoSlopeJson, TwoSlopeModule};
use crate::special;
use crate::suite;
use crate::summation::{self, Direction, SummationResult, Summator};

/// Result of one command: the JSON document and, for sampled evaluators,
/// a table of values.
pub struct Output {
    pub json: Value,
    pub csv: Option<Csv>,
}

/// Inputs shared by every command after flags and the job file are merged.
pub struct Job {
    pub ctx: Option<NumericContext>,
    pub payload: Option<Value>,
    pub seed: u64,
    pub jobs: usize,
    pub direction: Option<Complex64>,
    pub direction2: Option<Complex64>,
    pub base: Option<Complex64>,
    pub samples: Option<usize>,
    pub timings: bool,
}

impl Job {
    fn ctx(&self) -> Result<NumericContext, CliError> {
        self.ctx.ok_or_else(|| CliError::Schema("q is required (--q or context.q)".into()))
    }

    fn payload<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        let v = self.payload.clone().ok_or_else(|| CliError::Schema("an --input file is required".into()))?;
        serde_json::from_value(v).map_err(|e| CliError::Schema(format!("payload: {e}")))
    }

    fn direction(&self, q: Complex64, which: &str, value: Option<Complex64>) -> Result<Direction, CliError> {
        let c = value.ok_or_else(|| CliError::Schema(format!("--{which} is required")))?;
        Ok(Direction::new(q, c)?)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ThetaPayload {
    #[serde(default)]
    points: Vec<Complex64>,
    a: Option<Complex64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewtonPayload {
    coeffs: Vec<LaurentJson>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModulePayload {
    module: TwoSlopeJson,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampledModulePayload {
    module: TwoSlopeJson,
    #[serde(default)]
    points: Vec<Complex64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BorelPayload {
    module: Option<TwoSlopeJson>,
    series: Option<LaurentJson>,
    d: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StabilityPayload {
    u0: Complex64,
    u1: Complex64,
    family1: Option<LaurentJson>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectionPayload {
    system: SystemJson,
    #[serde(default)]
    points: Vec<Complex64>,
}

const DEFAULT_SAMPLES: usize = 20;

pub fn theta_eval(job: &Job) -> Result<Output, CliError> {
    let ctx = job.ctx()?;
    let q = ctx.q();
    let p: ThetaPayload = match job.payload {
        Some(_) => job.payload()?,
        None => ThetaPayload { points: Vec::new(), a: None },
    };
    let points = if p.points.is_empty() {
        connection::annulus_samples(q, job.samples.unwrap_or(100))
    } else {
        p.points
    };
    let rows: Vec<Result<(Value, Vec<Complex64>), CliError>> = job.pool()?.install(|| {
        points
            .par_iter()
            .map(|&z| {
                let series = special::theta_series(q, z)?;
                let triple = special::theta_triple(q, z)?;
                let mut o = Map::new();
                o.insert("z".into(), c(z));
                o.insert("series".into(), c(series));
                o.insert("triple".into(), c(triple));
                let mut vals = vec![series, triple];
                if let Some(a) = p.a {
                    let (ta, ea) = (special::theta_a(q, z, a)?, special::e_qa(q, z, a)?);
                    o.insert("theta_a".into(), c(ta));
                    o.insert("e_qa".into(), c(ea));
                    vals.extend([ta, ea]);
                }
                Ok((Value::Object(o), vals))
            })
            .collect()
    });
    let mut names = vec!["series".to_string(), "triple".to_string()];
    if p.a.is_some() {
        names.extend(["theta_a".to_string(), "e_qa".to_string()]);
    }
    let mut csv = Csv::new(names);
    let mut values = Vec::new();
    for (z, row) in points.iter().zip(rows) {
        let (v, vals) = row?;
        values.push(v);
        csv.push(*z, vals);
    }
    let mut doc = json!({"command": "theta-eval", "q": c(q), "values": values});
    if let Some(a) = p.a {
        doc["a"] = c(a);
    }
    Ok(Output { json: doc, csv: Some(csv) })
}

fn slope_value(m: Rational64) -> Value {
    if m.is_integer() {
        json!(m.to_integer())
    } else {
        json!(newton::format_slope(m))
    }
}

fn polygon_value(np: &NewtonPolygon) -> Value {
    Value::Array(np.slopes.iter().map(|&(m, r)| json!([slope_value(m), r])).collect())
}

pub fn newton(job: &Job) -> Result<Output, CliError> {
    let ctx = job.ctx()?;
    let p: NewtonPayload = job.payload()?;
    let coeffs = p.coeffs.iter().map(|w| w.into_window(&ctx)).collect::<crate::Result<Vec<_>>>()?;
    let op = QDifferenceOperator::new(coeffs)?;
    let np = newton::newton_polygon(&op)?;
    let eq = newton::equation_slopes(&op)?;
    let doc = json!({
        "command": "newton",
        "slopes": polygon_value(&np),
        "equation_slopes": polygon_value(&eq),
        "irregularity": slope_value(np.irregularity()),
        "fuchsian": np.is_fuchsian(),
    });
    Ok(Output { json: doc, csv: None })
}

fn module(ctx: &NumericContext, m: &TwoSlopeJson) -> Result<TwoSlopeModule, CliError> {
    Ok(m.into_module(ctx)?)
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("plain data serializes")
}

pub fn normal_form(job: &Job) -> Result<Output, CliError> {
    let ctx = job.ctx()?;
    let p: ModulePayload = job.payload()?;
    let m = module(&ctx, &p.module)?;
    let nf = normal_form_two_slope(&m)?;
    let gauge: Vec<LaurentJson> = nf.gauge.iter().map(|w| w.to_json()).collect();
    let doc = json!({
        "command": "normal-form",
        "module": to_value(&nf.module.to_json()),
        "gauge": to_value(&gauge),
    });
    Ok(Output { json: doc, csv: None })
}

/// Sample points where every listed summation is well conditioned, or the
/// user's points unchanged.
fn sample_points(job: &Job, q: Complex64, given: Vec<Complex64>, sums: &[&SummationResult]) -> Result<Vec<Complex64>, CliError> {
    if !given.is_empty() {
        return Ok(given);
    }
    let want = job.samples.unwrap_or(DEFAULT_SAMPLES);
    let mut out = Vec::with_capacity(want);
    for z in connection::annulus_samples(q, 16 * want.max(1)) {
        if out.len() == want {
            break;
        }
        let mut ok = true;
        for s in sums {
            if s.conditioning(z)? < suite::SAMPLE_CONDITIONING {
                ok = false;
            }
        }
        if ok {
            out.push(z);
        }
    }
    Ok(out)
}

fn component_names(prefix: &str, r: usize) -> Vec<String> {
    (0..r).map(|k| format!("{prefix}{k}")).collect()
}

fn summation_value(s: &SummationResult) -> Value {
    let g: Vec<LaurentJson> = s.g.iter().map(|w| w.to_json()).collect();
    json!({
        "direction": c(s.direction.rep()),
        "d": s.d,
        "gap": s.gap,
        "decay_certificate": s.decay_certificate(),
        "G": to_value(&g),
    })
}

pub fn sum(job: &Job) -> Result<Output, CliError> {
    let ctx = job.ctx()?;
    let q = ctx.q();
    let p: SampledModulePayload = job.payload()?;
    let m = module(&ctx, &p.module)?;
    let dir = job.direction(q, "direction", job.direction)?;
    let s = summation::sum_direction(&m, &dir)?;
    let points = sample_points(job, q, p.points, &[&s])?;
    let rows: Vec<Result<(Value, Vec<Complex64>), CliError>> = job.pool()?.install(|| {
        points
            .par_iter()
            .map(|&z| {
                let f = s.eval(z)?;
                let res = summation::summation_residual(&m, &s, z)?;
                Ok((json!({"z": c(z), "F": cvec(&f), "residual": res}), f.iter().cloned().collect()))
            })
            .collect()
    });
    let mut csv = Csv::new(component_names("F", m.rank()));
    let mut values = Vec::new();
    for (z, row) in points.iter().zip(rows) {
        let (v, f) = row?;
        values.push(v);
        csv.push(*z, f);
    }
    let doc = json!({"command": "sum", "summation": summation_value(&s), "values": values});
    Ok(Output { json: doc, csv: Some(csv) })
}

pub fn stokes(job: &Job) -> Result<Output, CliError> {
    let ctx = job.ctx()?;
    let q = ctx.q();
    let p: SampledModulePayload = job.payload()?;
    let m = module(&ctx, &p.module)?;
    let c1 = job.direction(q, "direction", job.direction)?;
    let c2 = job.direction(q, "direction2", job.direction2)?;
    let phi = summation::stokes_cocycle(&m, &c1, &c2)?;
    let points = sample_points(job, q, p.points, &[&phi.from, &phi.to])?;
    let rows: Vec<Result<(Value, Vec<Complex64>), CliError>> = job.pool()?.install(|| {
        points
            .par_iter()
            .map(|&z| {
                let v = phi.eval(z)?;
                let res = summation::cocycle_residual(&m, &phi, z)?;
                Ok((json!({"z": c(z), "phi": cvec(&v), "residual": res}), v.iter().cloned().collect()))
            })
            .collect()
    });
    let mut csv = Csv::new(component_names("phi", m.rank()));
    let mut values = Vec::new();
    for (z, row) in points.iter().zip(rows) {
        let (v, f) = row?;
        values.push(v);
        csv.push(*z, f);
    }
    let doc = json!({
        "command": "stokes",
        "from": c(c1.rep()),
        "to": c(c2.rep()),
        "values": values,
    });
    Ok(Output { json: doc, csv: Some(csv) })
}

fn invariant_value(v: &InvariantVector) -> Value {
    json!({
        "root": cmat(&v.root),
        "entries": v.entries.iter().map(|e| json!({
            "j": c(e.j),
            "vector": Value::Array(e.vector.iter().map(|&z| c(z)).collect()),
        })).collect::<Vec<_>>(),
        "max_abs": v.max_abs(),
    })
}

pub fn borel(job: &Job) -> Result<Output, CliError> {
    let ctx = job.ctx()?;
    let p: BorelPayload = job.payload()?;
    let doc = match (p.module, p.series) {
        (Some(mj), None) => {
            if p.d.is_some() {
                return Err(CliError::Schema("payload: \"d\" belongs to \"series\", the module carries its own".into()));
            }
            let m = module(&ctx, &mj)?;
            json!({"command": "borel", "invariants": invariant_value(&invariants::borel_invariants(&m)?)})
        }
        (None, Some(sj)) => {
            let d = p.d.ok_or_else(|| CliError::Schema("payload: \"series\" needs \"d\"".into()))?;
            let f = sj.into_window(&ctx)?;
            let b = invariants::q_borel(&f, d)?;
            json!({"command": "borel", "d": d, "transform": to_value(&b.to_json())})
        }
        _ => return Err(CliError::Schema("payload: give exactly one of \"module\" and \"series\"".into())),
    };
    Ok(Output { json: doc, csv: None })
}

pub fn alien(job: &Job) -> Result<Output, CliError> {
    let ctx = job.ctx()?;
    let q = ctx.q();
    let p: ModulePayload = job.payload()?;
    let m = module(&ctx, &p.module)?;
    let c0 = job.direction(q, "direction", job.direction)?;
    let a = job.base.ok_or_else(|| CliError::Schema("--base is required".into()))?;
    let s = Summator::new(&m)?;
    let points = summation::forbidden_set(&m)?.points;
    let vals: Vec<crate::Result<_>> = job
        .pool()?
        .install(|| points.par_iter().map(|pt| invariants::alien_derivative_with(&s, &pt.direction, a, &c0)).collect());
    let mut out = Vec::with_capacity(points.len());
    for (pt, v) in points.iter().zip(vals) {
        out.push(json!({
            "direction": c(pt.direction.rep()),
            "eigenvalue": c(pt.eigenvalue),
            "principal": pt.principal,
            "multiplicity": pt.multiplicity,
            "value": cvec(&v?),
        }));
    }
    let doc = json!({"command": "alien", "base": c(a), "reference": c(c0.rep()), "derivatives": out});
    Ok(Output { json: doc, csv: None })
}

pub fn serre(job: &Job) -> Result<Output, CliError> {
    let ctx = job.ctx()?;
    let p: ModulePayload = job.payload()?;
    let m = module(&ctx, &p.module)?;
    let mut entries = Vec::new();
    for (j, rows) in invariants::dual_sections(&m)? {
        let mut pairings = Vec::with_capacity(rows.len());
        for y in &rows {
            let sp = invariants::serre_pairing(&y.coeffs, &m)?;
            pairings.push(json!({
                "row": y.row,
                "via_sum": c(sp.via_sum),
                "via_product": c(sp.via_product),
                "difference": sp.difference,
            }));
        }
        entries.push(json!({"j": c(j), "pairings": pairings}));
    }
    let doc = json!({
        "command": "serre",
        "invariants": invariant_value(&invariants::serre_invariants(&m)?),
        "pairings": entries,
    });
    Ok(Output { json: doc, csv: None })
}

pub fn stability(job: &Job) -> Result<Output, CliError> {
    let ctx = job.ctx()?;
    let q = ctx.q();
    let p: StabilityPayload = job.payload()?;
    let zeros = elliptic::phi_zeros(q, p.u0, p.u1)?;
    let mut zs = Vec::with_capacity(zeros.len());
    for a in &zeros {
        let rep = a.rep();
        // ψ has poles at ±i·q^{ℤ/2}, exactly the zeros of φ_u when u0 = 0
        let psi = match elliptic::psi(q, rep) {
            Ok(v) => c(v),
            Err(crate::Error::Pole { .. }) => Value::Null,
            Err(e) => return Err(e.into()),
        };
        let fact = match elliptic::psi_factorization_check(q, rep) {
            Ok((lhs, rhs)) => json!([c(lhs), c(rhs)]),
            Err(crate::Error::Pole { .. }) => Value::Null,
            Err(e) => return Err(e.into()),
        };
        zs.push(json!({
            "a": c(rep),
            "phi": c(elliptic::phi_u(q, rep, p.u0, p.u1)?),
            "psi": psi,
            "psi_factorization": fact,
        }));
    }
    let mut doc = json!({"command": "stability", "u0": c(p.u0), "u1": c(p.u1), "phi_zeros": zs});
    if p.u0 != Complex64::new(0.0, 0.0) {
        doc["psi_target"] = c(-p.u1 / p.u0);
    }
    if let Some(w) = p.family1 {
        let f = elliptic::classify_family1(&w.into_window(&ctx)?)?;
        let class = match f.class {
            Family1Class::Split => "Split",
            Family1Class::StableIndecomposable => "StableIndecomposable",
        };
        doc["family1"] = json!({"class": class, "v": c(f.v)});
    }
    Ok(Output { json: doc, csv: None })
}

pub fn connection(job: &Job) -> Result<Output, CliError> {
    let ctx = job.ctx()?;
    let q = ctx.q();
    let p: ConnectionPayload = job.payload()?;
    let sys = p.system.into_system(&ctx)?;
    let conn = connection::birkhoff_connection(&sys)?;
    let points = if p.points.is_empty() {
        connection::annulus_samples(q, job.samples.unwrap_or(DEFAULT_SAMPLES))
    } else {
        p.points
    };
    let report = connection::connection_ellipticity_report(&|z| conn.eval(z), q, &points);
    let vals: Vec<crate::Result<_>> = job.pool()?.install(|| points.par_iter().map(|&z| conn.eval(z)).collect());
    let r = sys.rank();
    let mut names = Vec::with_capacity(r * r);
    for i in 0..r {
        for k in 0..r {
            names.push(format!("P{i}{k}"));
        }
    }
    let mut csv = Csv::new(names);
    let mut values = Vec::new();
    for (&z, v) in points.iter().zip(vals) {
        match v {
            Ok(pm) => {
                values.push(json!({"z": c(z), "P": cmat(&pm), "det": c(pm.determinant())}));
                csv.push(z, pm.transpose().iter().cloned().collect());
            }
            // near the divisor of det P; the report counts these as skipped
            Err(crate::Error::Pole { .. }) | Err(crate::Error::Singular(_)) => {
                values.push(json!({"z": c(z), "P": null, "det": null}));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let doc = json!({
        "command": "connection",
        "A0": cmat(&sys.at_zero()),
        "Ainf": cmat(&sys.at_infinity()),
        "report": to_value(&report),
        "values": values,
    });
    Ok(Output { json: doc, csv: Some(csv) })
}

pub fn verify_suite(job: &Job) -> Result<Output, CliError> {
    let reports = suite::run_all(job.seed, job.jobs)?;
    let passed = reports.iter().all(|r| r.passed);
    let suites: Vec<Value> = reports
        .iter()
        .map(|r| {
            let checks: Vec<Value> = r
                .checks
                .iter()
                .filter(|k| job.timings || k.label != suite::SECONDS_LABEL)
                .map(to_value)
                .collect();
            let mut v = json!({"id": r.id, "name": r.name, "passed": r.passed, "checks": checks, "error": r.error});
            if job.timings {
                v["seconds"] = json!(r.seconds);
            }
            v
        })
        .collect();
    let doc = json!({"command": "verify-suite", "seed": job.seed, "passed": passed, "suites": suites});
    Ok(Output { json: doc, csv: None })
}
