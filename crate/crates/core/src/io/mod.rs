//! Scenario files, Matrix Market files, SVG plots and the run manifest.

pub mod config;
pub mod matrix_market;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{Map, Value};

use crate::error::Result;

pub use config::{load_scenario, parse_config, parse_scenario, LoadedScenario, OutputFormat, ScenarioConfig};
pub use matrix_market::{load_matrix_market, parse_matrix_market, save_matrix_market, write_matrix_market};

/// Environment variable overriding every output directory.
pub const OUT_DIR_ENV: &str = "NEWMARK_OUT_DIR";

/// The explicit directory if given, else `NEWMARK_OUT_DIR` if set and
/// non-empty, else the configured one.
pub fn output_directory(explicit: Option<&Path>, configured: &Path) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.to_path_buf(),
    }
}

/// Writes `manifest.json` with the given entries plus a creation
/// timestamp. Timestamps live only here, never in the data files.
pub fn write_manifest(dir: &Path, entries: Map<String, Value>) -> Result<PathBuf> {
    let mut m = entries;
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    m.insert("created_unix".into(), Value::from(secs));
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&Value::Object(m)).expect("JSON values always serialize");
    fs::write(&path, text + "\n")?;
    Ok(path)
}
