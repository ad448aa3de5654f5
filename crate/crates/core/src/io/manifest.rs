use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{canonical_json, RunConfig};
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Hex SHA-256 of the canonical JSON form of the configuration.
    pub config_digest: String,
    pub command_line: Vec<String>,
    /// Wall-clock seconds.
    pub duration_s: f64,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
}

/// Stable digest of `cfg`: formatting and key order of the source text do
/// not matter, only the loaded values.
pub fn config_digest(cfg: &RunConfig) -> String {
    Sha256::digest(canonical_json(cfg).as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl RunManifest {
    pub fn new(cfg: &RunConfig, command_line: Vec<String>, duration_s: f64, outputs: Vec<String>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config_digest(cfg),
            command_line,
            duration_s,
            outputs,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest always serializes");
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}
