use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LaftError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LaftError {
    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("augmentation failed: {0}")]
    Augment(String),

    #[error("could not parse oracle response: {0}")]
    Parse(String),

    #[error("oracle unavailable for sample '{sample_id}' view {view}: {reason}")]
    OracleUnavailable {
        sample_id: String,
        view: usize,
        reason: String,
    },

    #[error("oracle transport error: {0}")]
    Transport(String),

    #[error("missing {what} for sample '{id}'")]
    Missing { what: &'static str, id: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<LaftError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LaftError {
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ LaftError::Stage { .. } => e,
            other => LaftError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Innermost error, skipping stage wrappers.
    pub fn root(&self) -> &LaftError {
        match self {
            LaftError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 1 config error, 2 stage failure, 3 oracle unavailable.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            LaftError::Config(_) | LaftError::InvalidArgument(_) => 1,
            LaftError::OracleUnavailable { .. } | LaftError::Transport(_) => 3,
            _ => 2,
        }
    }
}
