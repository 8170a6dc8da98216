pub mod experiment;
pub mod fit;
pub mod population;
pub mod sample;
pub mod verify;

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::CliResult;

#[derive(Serialize)]
struct RunRecord<'a, E: Serialize> {
    command: &'a str,
    /// SHA-256 of `config.json`'s compact encoding.
    digest: String,
    #[serde(flatten)]
    extra: E,
}

/// Writes `config.json` (the resolved settings, accepted back by `--config`)
/// and `run.json` (command and settings digest).
pub fn write_run_record<E: Serialize>(
    out: &Path,
    command: &str,
    config: &Value,
    extra: E,
) -> CliResult<()> {
    let record = RunRecord {
        command,
        digest: mixem::io::json_digest(config),
        extra,
    };
    mixem::io::save_json(config, &out.join("config.json"))?;
    mixem::io::save_json(&record, &out.join("run.json"))?;
    Ok(())
}
