//! Learnable parameter storage, addressable by stable string paths.

use std::collections::BTreeMap;

use super::array::Array;
use super::error::TensorError;
use super::rng::SplitRng;
use super::tape::{Tape, ValueId};

#[derive(Clone, Debug)]
pub struct Param {
    pub array: Array,
    pub trainable: bool,
}

/// All learnable arrays of a model, ordered by path for deterministic
/// iteration everywhere (updates, clipping, checkpoints).
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: &str, array: Array) {
        assert!(
            !self.entries.contains_key(path),
            "duplicate parameter path {path}"
        );
        self.entries.insert(
            path.to_string(),
            Param {
                array,
                trainable: true,
            },
        );
    }

    pub fn insert_frozen(&mut self, path: &str, array: Array) {
        self.insert(path, array);
        self.entries.get_mut(path).unwrap().trainable = false;
    }

    pub fn get(&self, path: &str) -> Result<&Param, TensorError> {
        self.entries.get(path).ok_or_else(|| TensorError::UnknownParam {
            path: path.to_string(),
        })
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Param, TensorError> {
        self.entries.get_mut(path).ok_or_else(|| TensorError::UnknownParam {
            path: path.to_string(),
        })
    }

    pub fn array(&self, path: &str) -> Result<&Array, TensorError> {
        Ok(&self.get(path)?.array)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.entries.iter_mut()
    }

    pub fn paths(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn numel(&self) -> usize {
        self.entries.values().map(|p| p.array.numel()).sum()
    }

    /// Xavier-uniform weight matrix: uniform(-a, a), a = sqrt(6/(fan_in+fan_out)).
    pub fn insert_weight(&mut self, path: &str, rows: usize, cols: usize, rng: &SplitRng) {
        let mut stream = rng.split("init").split(path);
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data: Vec<f64> = (0..rows * cols).map(|_| stream.uniform(-a, a)).collect();
        self.insert(path, Array::from_vec(rows, cols, data));
    }

    /// Small-range init for embeddings and learned query/state vectors.
    pub fn insert_uniform(&mut self, path: &str, rows: usize, cols: usize, bound: f64, rng: &SplitRng) {
        let mut stream = rng.split("init").split(path);
        let data: Vec<f64> = (0..rows * cols).map(|_| stream.uniform(-bound, bound)).collect();
        self.insert(path, Array::from_vec(rows, cols, data));
    }

    pub fn insert_zeros(&mut self, path: &str, rows: usize, cols: usize) {
        self.insert(path, Array::zeros(rows, cols));
    }
}

impl Tape {
    /// Put a parameter on the tape as a named leaf.
    pub fn param(&mut self, params: &ParamSet, path: &str) -> Result<ValueId, TensorError> {
        let p = params.get(path)?;
        Ok(self.named_leaf(path, p.array.clone(), p.trainable))
    }
}

/// Gradients keyed by parameter path.
pub type GradMap = BTreeMap<String, Array>;
