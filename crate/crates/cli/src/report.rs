//! Side-by-side JSON and text reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliResult, Stage};

/// Provenance shared by every report.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Wall-clock time of the run; the only field that differs between
    /// otherwise identical runs.
    pub timestamp: String,
}

impl Header {
    pub fn new(command: &str, seed: u64, config_hash: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash: config_hash.to_string(),
            timestamp: humantime::format_rfc3339_seconds(SystemTime::now()).to_string(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Report<'a, T: Serialize> {
    #[serde(flatten)]
    header: &'a Header,
    results: &'a T,
}

/// Writes `<dir>/<name>.json` and `<dir>/<name>.txt`; returns the JSON path.
pub fn write<T: Serialize>(dir: &Path, name: &str, header: &Header, results: &T) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).stage("report")?;
    let value = serde_json::to_value(Report { header, results }).stage("report")?;
    let json = dir.join(format!("{name}.json"));
    let text = serde_json::to_string_pretty(&value).stage("report")?;
    std::fs::write(&json, text + "\n").stage("report")?;
    std::fs::write(dir.join(format!("{name}.txt")), render_text(&value)).stage("report")?;
    Ok(json)
}

/// Flattens a JSON value into `dotted.key = value` lines.
pub fn render_text(value: &Value) -> String {
    let mut out = String::new();
    flatten(value, "", &mut out);
    out
}

fn flatten(value: &Value, prefix: &str, out: &mut String) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(v, &key, out);
            }
        }
        Value::Array(items) if items.iter().all(|v| !v.is_object() && !v.is_array()) => {
            let parts: Vec<String> = items.iter().map(scalar).collect();
            let _ = writeln!(out, "{prefix} = [{}]", parts.join(", "));
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(v, &format!("{prefix}[{i}]"), out);
            }
        }
        v => {
            let _ = writeln!(out, "{prefix} = {}", scalar(v));
        }
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
