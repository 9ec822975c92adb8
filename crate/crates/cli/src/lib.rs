//! Staged pipeline around `jobsignal-core`. Each stage reads named artifacts
//! from the output directory, writes its own, and appends a manifest line
//! with input and output hashes.

pub mod artifacts;
pub mod config;
pub mod report;
pub mod stages;

use std::path::{Path, PathBuf};

pub use config::{PipelineConfig, Stage};
pub use stages::{run_pipeline, run_stage, stage_seed};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),

    #[error("missing artifact {}{}", path.display(), producer.map(|s| format!(" (produced by stage `{s}`)")).unwrap_or_default())]
    MissingArtifact { path: PathBuf, producer: Option<Stage> },

    #[error("schema mismatch in {}: {message}", path.display())]
    Schema { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{context}: {message}")]
    Failed { context: String, message: String },

    #[error(transparent)]
    Core(#[from] jobsignal_core::Error),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }

    /// Attaches a file to an error; schema errors stay schema errors.
    pub fn at(path: &Path, e: impl Into<AnyError>) -> Self {
        match e.into() {
            AnyError::Core(jobsignal_core::Error::Schema { line, message }) => {
                PipelineError::Schema { path: path.to_path_buf(), message: format!("line {line}: {message}") }
            }
            other => PipelineError::Failed { context: path.display().to_string(), message: other.to_string() },
        }
    }
}

/// Errors from the libraries the pipeline calls.
#[derive(Debug, thiserror::Error)]
pub enum AnyError {
    #[error(transparent)]
    Core(#[from] jobsignal_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
