//! Adam with bias correction, plus global-norm gradient clipping.

use std::collections::BTreeMap;

use crate::tensor::{Array, GradMap, ParamSet};

use super::error::TrainError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First/second moment estimates per parameter path and the step counter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub m: BTreeMap<String, Array>,
    pub v: BTreeMap<String, Array>,
    pub step: u64,
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut GradMap, max_norm: f64) -> f64 {
    let sq: f64 = grads
        .values()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// One Adam update over every path in `grads`. Fails on a non-finite
/// gradient, naming the parameter.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &GradMap,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TrainError> {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for (path, grad) in grads {
        if !grad.is_finite() {
            return Err(TrainError::NanGradient { path: path.clone() });
        }
        let param = params.get_mut(path)?;
        if !param.trainable {
            continue;
        }
        let (rows, cols) = grad.shape();
        let m = state
            .m
            .entry(path.clone())
            .or_insert_with(|| Array::zeros(rows, cols));
        let v = state
            .v
            .entry(path.clone())
            .or_insert_with(|| Array::zeros(rows, cols));
        let p = param.array.data_mut();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..p.len() {
            let g = grad.data()[i];
            md[i] = BETA1 * md[i] + (1.0 - BETA1) * g;
            vd[i] = BETA2 * vd[i] + (1.0 - BETA2) * g * g;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
    Ok(())
}
