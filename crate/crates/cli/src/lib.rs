#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Command-line driver: configuration, experiment orchestration and reports.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

pub use config::{Command, ExperimentConfig, RunMode};
pub use report::{Report, SCHEMA};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("{}: {reason}", .path.display())]
    Input { path: PathBuf, reason: String },
    #[error("cannot write {}: {reason}", .path.display())]
    Output { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] cylmode_core::error::Error),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    /// Process exit code: 2 for unusable input, 3 for failures while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input { .. } => 2,
            CliError::Output { .. } | CliError::Core(_) | CliError::Run(_) => 3,
        }
    }
}
