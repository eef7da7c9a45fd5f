//! Deterministic JSON and CSV writers. Floats are printed with 17
//! significant digits (`{:.16e}`), integers as integers, object keys sorted.

use num_complex::Complex64;
use serde_json::{json, Value};
use std::fmt::Write;

use crate::linalg::{CMat, CVec};

pub fn c(z: Complex64) -> Value {
    json!([z.re, z.im])
}

pub fn cvec(v: &CVec) -> Value {
    Value::Array(v.iter().map(|&z| c(z)).collect())
}

pub fn cmat(m: &CMat) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| c(m[(i, j)])).collect())).collect())
}

pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                out.push_str(&float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            // short arrays of scalars stay on one line: complex pairs, slopes
            if items.iter().all(|x| !x.is_array() && !x.is_object()) {
                out.push('[');
                for (k, x) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, x) in items.iter().enumerate() {
                pad(out, indent + 1);
                write_value(out, x, indent + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (k, key) in keys.iter().enumerate() {
                pad(out, indent + 1);
                out.push_str(&serde_json::to_string(key).expect("string serializes"));
                out.push_str(": ");
                write_value(out, &map[*key], indent + 1);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, indent);
            out.push('}');
        }
    }
}

fn pad(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

/// Sampled function values: `re_z, im_z`, then re/im per component.
#[derive(Debug, Clone)]
pub struct Csv {
    components: Vec<String>,
    rows: Vec<(Complex64, Vec<Complex64>)>,
}

impl Csv {
    pub fn new(components: Vec<String>) -> Self {
        Self { components, rows: Vec::new() }
    }

    pub fn push(&mut self, z: Complex64, values: Vec<Complex64>) {
        debug_assert_eq!(values.len(), self.components.len());
        self.rows.push((z, values));
    }

    pub fn render(&self) -> String {
        let mut out = String::from("re_z,im_z");
        for name in &self.components {
            let _ = write!(out, ",re_{name},im_{name}");
        }
        out.push('\n');
        for (z, vals) in &self.rows {
            out.push_str(&float(z.re));
            out.push(',');
            out.push_str(&float(z.im));
            for v in vals {
                out.push(',');
                out.push_str(&float(v.re));
                out.push(',');
                out.push_str(&float(v.im));
            }
            out.push('\n');
        }
        out
    }
}
