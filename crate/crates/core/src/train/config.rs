//! Training configuration and the learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;

/// Optimizer schedule plus the nested model architecture. The defaults are
/// desk scale (batch 32); the reproduction setting uses batch 256 and the
/// default model dims.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// The learning rate divides by `lr_drop_factor` every `lr_drop_epoch`
    /// epochs.
    pub lr_drop_epoch: usize,
    pub lr_drop_factor: f64,
    pub seed: u64,
    /// Global L2 gradient clip; 0 disables.
    pub grad_clip: f64,
    pub checkpoint_every: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 32,
            epochs: 100,
            lr_drop_epoch: 90,
            lr_drop_factor: 10.0,
            seed: 0,
            grad_clip: 5.0,
            checkpoint_every: 1,
            model: ModelConfig::default(),
        }
    }
}

/// lr = base / factor^floor(epoch / drop_epoch)
pub fn lr_at_epoch(epoch: usize, config: &TrainConfig) -> f64 {
    let drops = (epoch / config.lr_drop_epoch) as i32;
    config.lr / config.lr_drop_factor.powi(drops)
}
