// SPDX-License-Identifier: Apache-2.0

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub const PROB_EPSILON: f64 = 1e-7;

/// Mean binary cross-entropy and its gradient with respect to `pred`.
/// Predictions are clamped to `[ε, 1-ε]`; the gradient is evaluated at the
/// clamped value.
pub fn cross_entropy(pred: &Tensor3<f64>, target: &[bool]) -> Result<(f64, Tensor3<f64>)> {
    if pred.data().len() != target.len() {
        return Err(Error::shape(format!("{} predictions vs {} targets", pred.data().len(), target.len())));
    }
    let n = target.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = pred.clone();
    for (g, (&p, &t)) in grad.data_mut().iter_mut().zip(pred.data().iter().zip(target)) {
        let p = p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
        if t {
            loss -= p.ln();
            *g = -1.0 / (p * n);
        } else {
            loss -= (1.0 - p).ln();
            *g = 1.0 / ((1.0 - p) * n);
        }
    }
    Ok((loss / n, grad))
}
