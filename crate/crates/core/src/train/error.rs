use thiserror::Error;

use crate::data::DataError;
use crate::model::ModelError;
use crate::tensor::checkpoint::CheckpointError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("NaN gradient in parameter {path}")]
    NanGradient { path: String },
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("dataset/vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("checkpoint family `{found}` does not match configured family `{expected}`")]
    FamilyMismatch { found: String, expected: String },
}

impl TrainError {
    /// True for NaN/Inf failures; the CLI maps these to their own exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::NanGradient { .. } | TrainError::NonFiniteLoss { .. }
        )
    }
}
