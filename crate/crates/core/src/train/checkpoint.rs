//! Training checkpoints: the tensor container holds model parameters and
//! optimizer state under separate prefixes; a JSON sidecar records the
//! config, epoch, and vocabulary hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::config::TrainConfig;
use super::error::TrainError;
use crate::tensor::{checkpoint as container, Array, ParamSet};

const MODEL_PREFIX: &str = "model/";
const ADAM_M_PREFIX: &str = "opt/m/";
const ADAM_V_PREFIX: &str = "opt/v/";
const ADAM_STEP: &str = "opt/step";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub vocab_hash: u64,
    pub config: TrainConfig,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Frozen-ness is a property of the model definition, not the container, so
/// callers reapply it after load via the registered ParamSet layout.
pub fn save(
    path: &Path,
    params: &ParamSet,
    adam: Option<&AdamState>,
    meta: &CheckpointMeta,
) -> Result<(), TrainError> {
    let mut tensors = BTreeMap::new();
    for (p, param) in params.iter() {
        tensors.insert(format!("{MODEL_PREFIX}{p}"), param.array.clone());
    }
    if let Some(state) = adam {
        for (p, arr) in &state.m {
            tensors.insert(format!("{ADAM_M_PREFIX}{p}"), arr.clone());
        }
        for (p, arr) in &state.v {
            tensors.insert(format!("{ADAM_V_PREFIX}{p}"), arr.clone());
        }
        tensors.insert(ADAM_STEP.into(), Array::scalar(state.step as f64));
    }
    container::save(path, &tensors)?;
    let sidecar = serde_json::to_string_pretty(meta)?;
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

pub struct LoadedCheckpoint {
    pub model: BTreeMap<String, Array>,
    pub adam: Option<AdamState>,
    pub meta: CheckpointMeta,
}

pub fn load(path: &Path) -> Result<LoadedCheckpoint, TrainError> {
    let tensors = container::load(path)?;
    let sidecar = std::fs::read_to_string(sidecar_path(path))?;
    let meta: CheckpointMeta = serde_json::from_str(&sidecar)?;

    let mut model = BTreeMap::new();
    let mut m = BTreeMap::new();
    let mut v = BTreeMap::new();
    let mut step = 0u64;
    for (key, arr) in tensors {
        if let Some(p) = key.strip_prefix(MODEL_PREFIX) {
            model.insert(p.to_string(), arr);
        } else if let Some(p) = key.strip_prefix(ADAM_M_PREFIX) {
            m.insert(p.to_string(), arr);
        } else if let Some(p) = key.strip_prefix(ADAM_V_PREFIX) {
            v.insert(p.to_string(), arr);
        } else if key == ADAM_STEP {
            step = arr.scalar_value() as u64;
        }
    }
    let adam = (!m.is_empty() || step > 0).then_some(AdamState { m, v, step });
    Ok(LoadedCheckpoint { model, adam, meta })
}

/// Overwrite a registered parameter set with checkpointed arrays. Every
/// registered path must be present with the right shape, and no extras.
pub fn restore_params(
    params: &mut ParamSet,
    stored: &BTreeMap<String, Array>,
) -> Result<(), TrainError> {
    for (path, param) in params.iter_mut() {
        let arr = stored.get(path).ok_or_else(|| {
            TrainError::VocabMismatch(format!("checkpoint is missing parameter {path}"))
        })?;
        if arr.shape() != param.array.shape() {
            return Err(TrainError::VocabMismatch(format!(
                "parameter {path}: checkpoint shape {} vs model {}",
                arr.shape_string(),
                param.array.shape_string()
            )));
        }
        param.array = arr.clone();
    }
    if stored.len() != params.len() {
        let extra: Vec<&String> = stored.keys().filter(|k| !params.contains(k)).collect();
        return Err(TrainError::VocabMismatch(format!(
            "checkpoint has {} unexpected parameters (first: {:?})",
            extra.len(),
            extra.first()
        )));
    }
    Ok(())
}
