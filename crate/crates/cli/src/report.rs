//! Versioned JSON envelope shared by every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const SCHEMA: &str = "cylmode-report-v1";

/// Stands in for a source revision until builds are stamped.
pub fn code_version() -> String {
    format!("{}-{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema: String,
    pub kind: String,
    pub code_version: String,
    pub code_hash: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub passed: bool,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(kind: &str, config: &ExperimentConfig, passed: bool, result: T) -> Self {
        let version = code_version();
        Self {
            schema: SCHEMA.into(),
            kind: kind.into(),
            code_hash: sha256_hex(version.as_bytes()),
            code_version: version,
            config_hash: sha256_hex(config.to_toml().as_bytes()),
            config: config.clone(),
            passed,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_file(path, self.to_json().as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Output {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
