//! Merging of command-line flags over an optional JSON config file.
//!
//! The file holds an optional top-level `seed` and one object per
//! subcommand, e.g. `{"seed": 7, "simulate": {"k": 4, "questions": 500}}`.
//! Flags that were given win over file values; everything else falls back
//! to the command's defaults. A report or summary JSON written by an earlier
//! run is also accepted: its embedded `config` object is used.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub fn load(path: Option<&Path>) -> CliResult<Value> {
    let Some(path) = path else {
        return Ok(Value::Object(Map::new()));
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Lib(crowdvote::Error::Format {
            line: e.line(),
            message: format!("config {}: {e}", path.display()),
        })
    })?;
    match value {
        Value::Object(mut m) if m.contains_key("generated_at") => match m.remove("config") {
            Some(inner @ Value::Object(_)) => Ok(inner),
            _ => Err(CliError::Usage(format!(
                "{} has no embedded config object",
                path.display()
            ))),
        },
        v @ Value::Object(_) => Ok(v),
        _ => Err(CliError::Usage(
            "config file must hold a JSON object".into(),
        )),
    }
}

/// Resolve a command's settings: file section, then the global seed, then
/// explicit flags (`flags` must serialize only the flags that were given).
pub fn resolve<F: Serialize, T: DeserializeOwned>(
    file: &Value,
    section: &str,
    seed: Option<u64>,
    flags: &F,
) -> CliResult<T> {
    let mut merged = match file.get(section) {
        Some(Value::Object(m)) => m.clone(),
        Some(_) => {
            return Err(CliError::Usage(format!(
                "config section {section:?} must be an object"
            )))
        }
        None => Map::new(),
    };
    if let Some(s) = file.get("seed") {
        merged.insert("seed".into(), s.clone());
    }
    if let Some(s) = seed {
        merged.insert("seed".into(), s.into());
    }
    let given = serde_json::to_value(flags).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Value::Object(m) = given {
        for (k, v) in m {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("{section}: {e}")))
}

/// The config document that reproduces a run: `{section: resolved}`.
pub fn embed<T: Serialize>(section: &str, resolved: &T) -> Value {
    let mut m = Map::new();
    m.insert(
        section.into(),
        serde_json::to_value(resolved).expect("config serializes"),
    );
    Value::Object(m)
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
