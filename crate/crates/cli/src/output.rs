use std::fmt::Write as _;

use chernoff_core::Error;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Parse { source: String, message: String },
    Io { path: String, message: String },
    Lib(Error),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Parse { .. } => "ParseError",
            CliError::Io { .. } => "IoError",
            CliError::Lib(e) => e.code(),
            CliError::Internal(_) => "InternalError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) if e.is_numeric_domain() => EXIT_NUMERIC,
            CliError::Internal(_) => EXIT_INTERNAL,
            _ => EXIT_INPUT,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => m.clone(),
            CliError::Parse { source, message } => format!("{source}: {message}"),
            CliError::Io { path, message } => format!("{path}: {message}"),
            CliError::Lib(e) => e.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Successful command output before rendering.
pub struct Report {
    pub payload: Value,
    pub diagnostics: Vec<String>,
    /// Optional human-readable body for `--format text`.
    pub text: Option<String>,
}

impl Report {
    pub fn new(payload: impl Serialize) -> Self {
        Self { payload: to_value(payload), diagnostics: Vec::new(), text: None }
    }

    pub fn note(&mut self, msg: impl Into<String>) {
        self.diagnostics.push(msg.into());
    }
}

pub fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("payload serializes")
}

/// Rounds every float to 12 significant digits.
pub fn round_numbers(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap();
            let r: f64 = format!("{x:.11e}").parse().unwrap();
            serde_json::Number::from_f64(r).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_numbers).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_numbers(v))).collect()),
        other => other,
    }
}

pub fn success_json(report: &Report) -> Value {
    json!({
        "status": "ok",
        "payload": round_numbers(report.payload.clone()),
        "diagnostics": report.diagnostics,
    })
}

pub fn error_json(err: &CliError) -> Value {
    json!({
        "status": "error",
        "code": err.code(),
        "message": err.message(),
        "diagnostics": Vec::<String>::new(),
    })
}

pub fn render_text(report: &Report) -> String {
    let mut out = String::new();
    match &report.text {
        Some(body) => out.push_str(body),
        None => flatten(&round_numbers(report.payload.clone()), "", &mut out),
    }
    for d in &report.diagnostics {
        let _ = writeln!(out, "note: {d}");
    }
    out
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn flatten(v: &Value, prefix: &str, out: &mut String) {
    match v {
        Value::Object(map) => flatten_map(map, prefix, out),
        Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => {
            let row: Vec<String> = items.iter().map(scalar).collect();
            let _ = writeln!(out, "{prefix}: [{}]", row.join(", "));
        }
        Value::Array(items) if items.iter().all(Value::is_array) => {
            let _ = writeln!(out, "{prefix}:");
            for row in items {
                let cells: Vec<String> = row.as_array().unwrap().iter().map(|c| format!("{:>16}", scalar(c))).collect();
                let _ = writeln!(out, "  {}", cells.join(" "));
            }
        }
        Value::Array(items) => {
            for (k, item) in items.iter().enumerate() {
                flatten(item, &format!("{prefix}[{k}]"), out);
            }
        }
        other => {
            let _ = writeln!(out, "{prefix}: {}", scalar(other));
        }
    }
}

fn flatten_map(map: &Map<String, Value>, prefix: &str, out: &mut String) {
    for (k, v) in map {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        flatten(v, &key, out);
    }
}
