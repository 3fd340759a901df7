//! Training harness: Adam, schedule, checkpointing, evaluation.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod trainer;

pub use adam::{adam_step, clip_global_norm, AdamState};
pub use checkpoint::CheckpointMeta;
pub use config::{lr_at_epoch, TrainConfig};
pub use error::TrainError;
pub use evaluate::{build_report, evaluate, EvalReport, PredictionRecord, ScoredQuestion};
pub use trainer::{train, Dataset, EpochLog, TrainOutcome};
