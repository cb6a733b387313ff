use std::path::PathBuf;

use thiserror::Error;

use crate::Stage;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing {file}; run the {needs} stage first")]
    Missing { file: String, needs: Stage },
    #[error("{file} does not match the checksum recorded by the {producer} stage; rerun it")]
    Stale { file: String, producer: Stage },
    #[error(transparent)]
    Core(#[from] dfc_core::Error),
    #[error(transparent)]
    Tensor(#[from] dfc_core::tensor::TensorError),
}

impl PipelineError {
    /// The stage a failure is attributed to, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;
