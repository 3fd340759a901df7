use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs} and {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },
    #[error("{op}: index {index} out of range (bound {bound}) at slot {slot}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
        slot: usize,
    },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape}")]
    NonScalarLoss { shape: String },
    #[error("unknown parameter path: {path}")]
    UnknownParam { path: String },
}
