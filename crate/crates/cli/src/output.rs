use std::fs;
use std::io::Write;
use std::path::Path;

use gdp_core::PrivacyReport;
use serde_json::{json, Map, Value};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// `x` with 12 significant digits, trailing zeros removed; plain notation
/// for moderate magnitudes and scientific otherwise.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Numbers for JSON; non-finite values become strings since JSON has no
/// infinity.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(sig12(x))
    }
}

pub fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn report_json(r: &PrivacyReport) -> Value {
    json!({
        "method": r.method.name(),
        "mu": opt_num(r.mu),
        "eps": num(r.eps),
        "delta": num(r.delta),
        "diagnostics": {
            "kappa3_sum": opt_num(r.diagnostics.kappa3_sum),
            "grid_spacing": opt_num(r.diagnostics.grid_spacing),
            "tail_mass": opt_num(r.diagnostics.tail_mass),
        },
    })
}

/// Top-level document: version, command, echoed inputs, then outputs.
pub fn document(command: &str, inputs: Map<String, Value>, outputs: Map<String, Value>) -> Value {
    let mut doc = Map::new();
    doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
    doc.insert("command".into(), json!(command));
    doc.insert("inputs".into(), Value::Object(inputs));
    for (k, v) in outputs {
        doc.insert(k, v);
    }
    Value::Object(doc)
}

pub fn write_json(path: &Path, doc: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("JSON values serialize");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io("stdout", e)),
    }
}

pub fn fmt_fixed(x: Option<f64>) -> String {
    match x {
        None => "-".into(),
        Some(v) if v.is_infinite() => "inf".into(),
        Some(v) => format!("{v:.4}"),
    }
}

pub fn fmt_prob(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x:.4e}")
    }
}
