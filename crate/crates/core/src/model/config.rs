//! Model architecture configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gcn,
    Gine,
    Gat,
    Lcgn,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Gcn => "gcn",
            Family::Gine => "gine",
            Family::Gat => "gat",
            Family::Lcgn => "lcgn",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "gcn" => Ok(Family::Gcn),
            "gine" => Ok(Family::Gine),
            "gat" => Ok(Family::Gat),
            "lcgn" => Ok(Family::Lcgn),
            other => Err(format!("unknown layer family `{other}` (gcn|gine|gat|lcgn)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Mean,
    Sum,
    Max,
}

/// Architecture dimensions and switches. Defaults follow the reproduction
/// setting: 300-d word/hidden vectors, 512-d instructions, five reasoning
/// steps, four attention heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub hidden_dim: usize,
    pub instruction_dim: usize,
    /// Number of instruction vectors M; one message-passing step each.
    pub steps: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub max_question_len: usize,
    pub dropout: f64,
    pub family: Family,
    pub gine_theta_depth: u8,
    pub gat_residual: bool,
    pub aggregate: Aggregate,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 300,
            hidden_dim: 300,
            instruction_dim: 512,
            steps: 5,
            heads: 4,
            ffn_dim: 1024,
            encoder_layers: 2,
            decoder_layers: 2,
            max_question_len: 30,
            dropout: 0.1,
            family: Family::Gat,
            gine_theta_depth: 1,
            gat_residual: true,
            aggregate: Aggregate::Mean,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("word_dim", self.word_dim),
            ("hidden_dim", self.hidden_dim),
            ("instruction_dim", self.instruction_dim),
            ("steps", self.steps),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("encoder_layers", self.encoder_layers),
            ("decoder_layers", self.decoder_layers),
            ("max_question_len", self.max_question_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(ModelError::Config(format!(
                "hidden_dim {} not divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        if !self.instruction_dim.is_multiple_of(self.heads) {
            return Err(ModelError::Config(format!(
                "instruction_dim {} not divisible by heads {}",
                self.instruction_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !matches!(self.gine_theta_depth, 1 | 2) {
            return Err(ModelError::Config(format!(
                "gine_theta_depth {} must be 1 or 2",
                self.gine_theta_depth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
}
