use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("missing upstream artifact {}; run `{stage}` first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] phenn::Error),
}

impl BenchError {
    /// Validation problems exit with status 1, everything else with 2.
    pub fn is_validation(&self) -> bool {
        matches!(self, BenchError::Config { .. })
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
