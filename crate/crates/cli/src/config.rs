//! JSON config files.
//!
//! A config file maps subcommand names to objects of flag values:
//!
//! ```json
//! { "infer": { "batch-size": 20, "estimator": "vimco", "plot": true } }
//! ```
//!
//! Values are spliced into the argument list right after the subcommand
//! name, minus any flag the user gave explicitly, so unknown keys are
//! rejected by the same parser that rejects unknown flags.

use std::ffi::OsString;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::CliError;

pub const SUBCOMMANDS: [&str; 6] = ["infer", "mll", "sample", "simulate", "check", "bench-scaling"];

/// Top-level flags that take a value (needed to locate the subcommand token).
const VALUE_FLAGS: [&str; 3] = ["--config", "--threads", "--log-level"];

/// Env vars that outrank the config file for a given key.
const ENV_KEYS: [(&str, &str); 2] = [("out", crate::args::OUT_DIR_ENV), ("threads", crate::args::THREADS_ENV)];

pub fn load(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::BadInput(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::BadInput(format!("config {}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(CliError::BadInput(format!("config {}: expected a JSON object", path.display())));
    };
    let unknown: Vec<&str> = map.keys().map(String::as_str).filter(|k| !SUBCOMMANDS.contains(k)).collect();
    if !unknown.is_empty() {
        return Err(CliError::BadInput(format!(
            "config {}: unknown section(s) {} (expected one of {})",
            path.display(),
            unknown.join(", "),
            SUBCOMMANDS.join(", ")
        )));
    }
    Ok(map)
}

/// Flag tokens for one config section, skipping keys in `given`.
pub fn section_tokens(section: &Value, given: &[String]) -> Result<Vec<OsString>, CliError> {
    let Value::Object(entries) = section else {
        return Err(CliError::BadInput("config sections must be JSON objects".into()));
    };
    let mut problems = Vec::new();
    let mut out = Vec::new();
    for (key, value) in entries {
        let flag = key.replace('_', "-");
        if flag == "config" {
            problems.push("`config` cannot be set from a config file".to_string());
            continue;
        }
        if given.contains(&flag) || ENV_KEYS.iter().any(|(k, var)| *k == flag && std::env::var_os(var).is_some()) {
            continue;
        }
        let text = match value {
            Value::Bool(true) => {
                out.push(OsString::from(format!("--{flag}")));
                continue;
            }
            Value::Bool(false) | Value::Null => continue,
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            Value::Array(items) => {
                let parts: Option<Vec<String>> = items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => Some(s.clone()),
                        Value::Number(n) => Some(n.to_string()),
                        _ => None,
                    })
                    .collect();
                match parts {
                    Some(p) => p.join(","),
                    None => {
                        problems.push(format!("`{key}`: arrays may hold only strings and numbers"));
                        continue;
                    }
                }
            }
            Value::Object(_) => {
                problems.push(format!("`{key}`: nested objects are not flag values"));
                continue;
            }
        };
        out.push(OsString::from(format!("--{flag}={text}")));
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(CliError::BadInput(format!("config: {}", problems.join("; "))))
    }
}

/// Position of the subcommand token in `argv`.
pub fn subcommand_position(argv: &[OsString], name: &str) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let tok = argv[i].to_string_lossy();
        if tok == name {
            return Some(i);
        }
        if VALUE_FLAGS.contains(&tok.as_ref()) {
            i += 1;
        }
        i += 1;
    }
    None
}

/// `argv` with the config section for `name` spliced in after the subcommand.
pub fn splice(argv: &[OsString], name: &str, config: &Map<String, Value>) -> Result<Vec<OsString>, CliError> {
    let Some(section) = config.get(name) else {
        return Ok(argv.to_vec());
    };
    let pos = subcommand_position(argv, name)
        .ok_or_else(|| CliError::BadInput(format!("cannot locate subcommand `{name}` in the arguments")))?;
    let given: Vec<String> = argv[1..]
        .iter()
        .filter_map(|t| {
            let t = t.to_string_lossy();
            let flag = t.strip_prefix("--")?;
            Some(flag.split('=').next().unwrap_or(flag).to_string())
        })
        .collect();
    let mut out = argv[..=pos].to_vec();
    out.extend(section_tokens(section, &given)?);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}
