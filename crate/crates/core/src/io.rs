//! Data ingestion, configuration files and report envelopes.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::process::{CountSeries, ModelSpec};

/// Parsed counts plus any notes produced while reading.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub series: CountSeries,
    pub notes: Vec<String>,
}

/// Parse one nonnegative integer per line.
///
/// Blank lines are ignored. A non-numeric first line is treated as a header.
/// When a line holds several comma-separated fields the last one is used.
pub fn parse_counts(text: &str, name: &str) -> Result<Ingested> {
    let mut values = Vec::new();
    let mut notes = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim().trim_matches('"');
        let first = !seen_content;
        seen_content = true;
        match parse_count(field) {
            Ok(v) => values.push(v),
            Err(reason) => {
                if first && field.parse::<f64>().is_err() {
                    notes.push(format!("line {line_no}: header '{line}' skipped"));
                    continue;
                }
                return Err(Error::Data(format!("line {line_no}: '{line}' {reason}")));
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Data(format!("{name}: no observations found")));
    }
    Ok(Ingested { series: CountSeries::new(values, name)?, notes })
}

fn parse_count(field: &str) -> std::result::Result<u64, &'static str> {
    if let Ok(v) = field.parse::<u64>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v < 0.0 => Err("is negative"),
        Ok(v) if v.fract() == 0.0 && v.is_finite() && v < 9.0e15 => Ok(v as u64),
        Ok(_) => Err("is not an integer"),
        Err(_) => Err("is not a number"),
    }
}

pub fn read_counts(path: &Path) -> Result<Ingested> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    parse_counts(&text, name)
}

/// One integer per line.
pub fn counts_to_csv(values: &[u64]) -> String {
    let mut out = String::with_capacity(values.len() * 3);
    for v in values {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Deserialize a TOML (`.toml`) or JSON (anything else) configuration.
pub fn parse_config<T: DeserializeOwned>(text: &str, is_toml: bool) -> Result<T> {
    if is_toml {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    } else {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let is_toml = path.extension().map(|e| e.eq_ignore_ascii_case("toml")).unwrap_or(false);
    parse_config(&text, is_toml)
}

/// Load and validate a model specification.
pub fn load_spec(path: &Path) -> Result<ModelSpec> {
    load_config::<ModelSpec>(path)?.validated()
}

/// Hex SHA-256 of the JSON serialization of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).unwrap_or_default();
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Wrapper written around every JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub report: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new<C: Serialize>(command: &str, seed: Option<u64>, config: &C, report: T) -> Self {
        Envelope {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: config_hash(config),
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}
