use std::path::Path;

use thiserror::Error;
use verse_core::Error as CoreError;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("ingest: {0}")]
    Ingest(String),
    #[error("train: {0}")]
    Train(String),
    #[error("generate: {0}")]
    Generate(String),
    #[error("artifact: {0}")]
    Artifact(String),
}

impl CliError {
    /// Process exit code.
    ///
    /// | code | meaning |
    /// |------|---------|
    /// | 0 | success |
    /// | 2 | invalid config or arguments |
    /// | 3 | corpus, POS or tag file could not be ingested |
    /// | 4 | training diverged or failed a gradient check |
    /// | 5 | keyword assembly or generation failed |
    /// | 6 | missing or malformed artifact, other I/O failure |
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Ingest(_) => 3,
            CliError::Train(_) => 4,
            CliError::Generate(_) => 5,
            CliError::Artifact(_) => 6,
        }
    }

    /// Reclassifies I/O and format failures as ingestion errors naming `path`.
    pub(crate) fn ingest_of(path: &Path) -> impl FnOnce(CoreError) -> CliError + '_ {
        move |e| match e {
            CoreError::Io(io) => CliError::Ingest(format!("{}: {io}", path.display())),
            CoreError::Format(m) => CliError::Ingest(format!("{}: {m}", path.display())),
            other => other.into(),
        }
    }

    /// Names `path` in I/O and format failures.
    pub(crate) fn artifact_of(path: &Path) -> impl FnOnce(CoreError) -> CliError + '_ {
        move |e| match e {
            CoreError::Io(io) => CliError::Artifact(format!("{}: {io}", path.display())),
            CoreError::Format(m) => CliError::Artifact(format!("{}: {m}", path.display())),
            other => other.into(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Config(m) => CliError::Config(m),
            CoreError::Ingest { .. } => CliError::Ingest(msg),
            CoreError::Training { .. } | CoreError::GradientCheck(_) => CliError::Train(msg),
            CoreError::Contract(_) | CoreError::Expansion(_) => CliError::Generate(msg),
            CoreError::Format(_) | CoreError::Io(_) => CliError::Artifact(msg),
        }
    }
}
