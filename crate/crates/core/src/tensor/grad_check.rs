//! Central-finite-difference gradient verification.
//!
//! The loss closure rebuilds its entire forward pass from a `ParamSet`, so
//! the numeric side never shares code with the backward rules it checks.

use super::array::Array;
use super::params::{GradMap, ParamSet};

pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub worst: Option<(String, usize)>,
}

/// Relative error with an absolute floor of 1: tiny gradients are compared
/// absolutely, large ones relatively.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compare analytic gradients against central differences of `loss_fn`.
///
/// Checks up to `max_coords_per_tensor` evenly spaced coordinates of every
/// trainable parameter (all of them when the tensor is small enough).
pub fn grad_check<F>(
    loss_fn: F,
    params: &ParamSet,
    analytic: &GradMap,
    epsilon: f64,
    max_coords_per_tensor: usize,
) -> GradCheckReport
where
    F: Fn(&ParamSet) -> f64,
{
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        worst: None,
    };
    let mut scratch = params.clone();
    for (path, param) in params.iter() {
        if !param.trainable {
            continue;
        }
        let grad = analytic
            .get(path)
            .cloned()
            .unwrap_or_else(|| Array::zeros(param.array.rows(), param.array.cols()));
        let numel = param.array.numel();
        let stride = numel.div_ceil(max_coords_per_tensor).max(1);
        for coord in (0..numel).step_by(stride) {
            let base = param.array.data()[coord];

            scratch.get_mut(path).unwrap().array.data_mut()[coord] = base + epsilon;
            let up = loss_fn(&scratch);
            scratch.get_mut(path).unwrap().array.data_mut()[coord] = base - epsilon;
            let down = loss_fn(&scratch);
            scratch.get_mut(path).unwrap().array.data_mut()[coord] = base;

            let numeric = (up - down) / (2.0 * epsilon);
            let err = rel_err(grad.data()[coord], numeric);
            report.coords_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((path.clone(), coord));
            }
        }
    }
    report
}
