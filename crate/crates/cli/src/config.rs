//! Layered settings: built-in defaults, then a JSON config file, then
//! command-line flags, then `--set key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON file with settings for this subcommand.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one setting, e.g. `--set max_iters=200`. Values are parsed as
    /// JSON when possible and taken as strings otherwise.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Output directory (created if missing).
    #[arg(long = "out", value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

impl CommonArgs {
    pub fn prepare_out(&self) -> CliResult<&Path> {
        fs::create_dir_all(&self.out).map_err(|e| {
            CliError::Validation(format!("cannot create {}: {e}", self.out.display()))
        })?;
        Ok(&self.out)
    }
}

/// Flags the user actually passed, keyed by setting name.
#[derive(Debug, Default)]
pub struct Flags(Map<String, Value>);

impl Flags {
    pub fn put<T: Serialize>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.0.insert(
                key.to_string(),
                serde_json::to_value(v).expect("flag serializes"),
            );
        }
    }
}

fn parse_override(raw: &str) -> CliResult<(String, Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {raw:?}")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Usage(format!(
            "--set has an empty key in {raw:?}"
        )));
    }
    let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
    Ok((key.to_string(), value))
}

fn load_file(path: &Path) -> CliResult<Map<String, Value>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Validation(format!(
            "{} must contain a JSON object",
            path.display()
        ))),
        Err(e) => Err(CliError::Validation(format!("{}: {e}", path.display()))),
    }
}

/// Resolves the settings and returns them with their JSON form.
pub fn resolve<T>(common: &CommonArgs, flags: Flags) -> CliResult<(T, Value)>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Value::Object(mut merged) = serde_json::to_value(T::default()).expect("defaults serialize")
    else {
        unreachable!("settings are JSON objects");
    };
    let known: Vec<String> = merged.keys().cloned().collect();
    if let Some(path) = &common.config {
        merged.extend(load_file(path)?);
    }
    merged.extend(flags.0);
    for raw in &common.overrides {
        let (key, value) = parse_override(raw)?;
        if !known.contains(&key) {
            return Err(CliError::Usage(format!(
                "unknown setting {key:?}; valid keys: {}",
                known.join(", ")
            )));
        }
        merged.insert(key, value);
    }
    let value = Value::Object(merged);
    let settings = serde_json::from_value(value.clone())
        .map_err(|e| CliError::Validation(format!("bad settings: {e}")))?;
    Ok((settings, value))
}

pub fn require<T: Copy>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required setting {flag}")))
}
