//! Batch front end: a JSON job file in, a JSON document (and CSV for sampled
//! evaluators) out.
//!
//! Exit codes: 0 success, 1 I/O, schema or usage error (and a failed
//! `verify-suite`), 2 numerical domain error.

mod commands;
pub mod output;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::laurent::{NumericContext, DEFAULT_TOL_ABS, DEFAULT_TOL_REL, DEFAULT_WINDOW};
use commands::{Job, Output};

#[derive(Debug, Parser)]
#[command(name = "qstokes", version, about = "Linear q-difference equations: theta functions, summation, Stokes data, invariants")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// θ_q by series and triple product (and θ_{q,a}, e_{q,a} with payload "a")
    ThetaEval,
    /// Newton polygon slopes of a q-difference operator
    Newton,
    /// Normal form of a two-slope module
    NormalForm,
    /// Summed gauge transform in a direction (--direction)
    Sum,
    /// Stokes cocycle between two directions (--direction, --direction2)
    Stokes,
    /// q-Borel invariants of a module, or the q-Borel transform of a series
    Borel,
    /// Alien-derivative residues at every forbidden direction (--base, --direction)
    Alien,
    /// Serre-duality pairings and invariants
    Serre,
    /// Zeros of φ_u, ψ checks and the first stability family
    Stability,
    /// Birkhoff connection matrix of a global fuchsian system
    Connection,
    /// Runs the property suites
    VerifySuite,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ThetaEval => "theta-eval",
            Command::Newton => "newton",
            Command::NormalForm => "normal-form",
            Command::Sum => "sum",
            Command::Stokes => "stokes",
            Command::Borel => "borel",
            Command::Alien => "alien",
            Command::Serre => "serre",
            Command::Stability => "stability",
            Command::Connection => "connection",
            Command::VerifySuite => "verify-suite",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// Modulus, e.g. "2", "1.5+0.5i"
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub q: Option<String>,
    /// Symmetric coefficient window [-N, N]
    #[arg(long, global = true)]
    pub window: Option<i64>,
    #[arg(long, global = true)]
    pub tol_rel: Option<f64>,
    #[arg(long, global = true)]
    pub tol_abs: Option<f64>,
    /// Job file: {"command"?, "context"?, "payload"}
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// JSON destination (default stdout)
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// CSV destination for sampled values
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub direction: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub direction2: Option<String>,
    /// Base point of alien derivatives
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub base: Option<String>,
    /// Number of sample points when the payload lists none
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Include wall-clock timings in the verify-suite report
    #[arg(long, global = true)]
    pub timings: bool,
}

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Schema(String),
    Domain(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidContext(_) | Error::ContextMismatch | Error::Dimension(_) | Error::ZeroArgument(_) => {
                CliError::Schema(e.to_string())
            }
            e => CliError::Domain(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Schema(_) => 1,
            CliError::Domain(_) => 2,
        }
    }

    pub fn document(&self) -> Value {
        match self {
            CliError::Io(m) => json!({"error": "Io", "message": m}),
            CliError::Schema(m) => json!({"error": "Schema", "message": m}),
            CliError::Domain(e) => json!({"error": e.kind(), "message": e.to_string()}),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobFile {
    command: Option<String>,
    context: Option<ContextJson>,
    payload: Option<Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextJson {
    q: Option<Complex64>,
    window: Option<i64>,
    tol_rel: Option<f64>,
    tol_abs: Option<f64>,
}

pub fn parse_complex(s: &str) -> Result<Complex64, CliError> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    t.parse::<Complex64>().map_err(|_| CliError::Schema(format!("not a complex number: {s:?}")))
}

fn read_job(path: &Path) -> Result<JobFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

fn build_job(cmd: Command, f: &Flags) -> Result<Job, CliError> {
    let file = match &f.input {
        Some(p) => Some(read_job(p)?),
        None => None,
    };
    if let Some(name) = file.as_ref().and_then(|j| j.command.as_deref()) {
        if name != cmd.name() {
            return Err(CliError::Schema(format!("job file is for {name:?}, not {:?}", cmd.name())));
        }
    }
    let fc = file.as_ref().and_then(|j| j.context.as_ref());
    let q = match &f.q {
        Some(s) => Some(parse_complex(s)?),
        None => fc.and_then(|c| c.q),
    };
    let window = f.window.or(fc.and_then(|c| c.window)).unwrap_or(DEFAULT_WINDOW);
    let tol_rel = f.tol_rel.or(fc.and_then(|c| c.tol_rel)).unwrap_or(DEFAULT_TOL_REL);
    let tol_abs = f.tol_abs.or(fc.and_then(|c| c.tol_abs)).unwrap_or(DEFAULT_TOL_ABS);
    let ctx = match q {
        Some(q) => Some(NumericContext::new(q, -window, window, tol_rel, tol_abs)?),
        None => None,
    };
    let opt = |s: &Option<String>| s.as_deref().map(parse_complex).transpose();
    Ok(Job {
        ctx,
        payload: file.and_then(|j| j.payload),
        seed: f.seed,
        jobs: f.jobs,
        direction: opt(&f.direction)?,
        direction2: opt(&f.direction2)?,
        base: opt(&f.base)?,
        samples: f.samples,
        timings: f.timings,
    })
}

fn dispatch(cmd: Command, job: &Job) -> Result<Output, CliError> {
    match cmd {
        Command::ThetaEval => commands::theta_eval(job),
        Command::Newton => commands::newton(job),
        Command::NormalForm => commands::normal_form(job),
        Command::Sum => commands::sum(job),
        Command::Stokes => commands::stokes(job),
        Command::Borel => commands::borel(job),
        Command::Alien => commands::alien(job),
        Command::Serre => commands::serre(job),
        Command::Stability => commands::stability(job),
        Command::Connection => commands::connection(job),
        Command::VerifySuite => commands::verify_suite(job),
    }
}

fn write_to(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

/// Runs one parsed invocation and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = build_job(cli.command, &cli.flags).and_then(|job| dispatch(cli.command, &job));
    let out = cli.flags.output.as_deref();
    match result {
        Ok(o) => {
            if let (Some(path), Some(table)) = (&cli.flags.csv, &o.csv) {
                if let Err(e) = write_to(Some(path), &table.render()) {
                    return fail(&e, out);
                }
            }
            if let Err(e) = write_to(out, &output::to_json(&o.json)) {
                return fail(&e, None);
            }
            let failed_suite = cli.command == Command::VerifySuite && o.json["passed"] != json!(true);
            i32::from(failed_suite)
        }
        Err(e) => fail(&e, out),
    }
}

fn fail(e: &CliError, out: Option<&Path>) -> i32 {
    let doc = output::to_json(&e.document());
    if write_to(out, &doc).is_err() {
        eprint!("{doc}");
    }
    e.exit_code()
}

/// Entry point for the binary: parses `args`, maps usage errors to exit 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
