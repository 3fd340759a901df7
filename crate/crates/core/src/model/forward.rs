//! Per-pass forward context: one tape, cached parameter leaves, the
//! dropout stream, and auxiliary records (batch statistics, traces).

use std::collections::BTreeMap;

use super::config::ModelConfig;
use crate::tensor::{Activation, Mode, ParamSet, SplitRng, Tape, TensorError, ValueId};

/// Batch statistics a train-mode batch-norm layer produced; the trainer
/// folds them into the layer's running statistics after the step.
#[derive(Clone, Debug)]
pub struct BnStats {
    pub prefix: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub struct Forward<'a> {
    pub tape: Tape,
    pub config: &'a ModelConfig,
    pub params: &'a ParamSet,
    pub mode: Mode,
    pub rng: SplitRng,
    cache: BTreeMap<String, ValueId>,
    pub bn_stats: Vec<BnStats>,
}

impl<'a> Forward<'a> {
    pub fn new(config: &'a ModelConfig, params: &'a ParamSet, mode: Mode, rng: SplitRng) -> Self {
        Forward {
            tape: Tape::new(),
            config,
            params,
            mode,
            rng,
            cache: BTreeMap::new(),
            bn_stats: Vec::new(),
        }
    }

    /// Parameter leaf, created once per tape and reused.
    pub fn param(&mut self, path: &str) -> Result<ValueId, TensorError> {
        if let Some(&v) = self.cache.get(path) {
            return Ok(v);
        }
        let v = self.tape.param(self.params, path)?;
        self.cache.insert(path.to_string(), v);
        Ok(v)
    }

    /// x W + b with parameters looked up by path.
    pub fn affine(&mut self, x: ValueId, w: &str, b: &str) -> Result<ValueId, TensorError> {
        let wv = self.param(w)?;
        let bv = self.param(b)?;
        let prod = self.tape.matmul(x, wv)?;
        self.tape.add_row(prod, bv)
    }

    pub fn dropout(&mut self, v: ValueId) -> ValueId {
        let p = self.config.dropout;
        self.tape.dropout(v, p, self.mode, &mut self.rng)
    }

    pub fn act(&mut self, v: ValueId, kind: Activation) -> ValueId {
        self.tape.activation(v, kind)
    }
}
