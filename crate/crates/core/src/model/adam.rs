//! Adam parameter updates with bias correction.

use crate::error::{Error, Result};

use super::{Gradients, NetworkParams};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates, shape-matched to the parameter tensors,
/// plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn empty() -> Self {
        Self {
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn zeros_like(params: &NetworkParams) -> Self {
        let shapes: Vec<usize> = (0..params.tensor_count())
            .map(|i| params.tensor(i).len())
            .collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }
}

/// One Adam step over every tensor. Rejects non-finite gradients.
pub fn adam_step(params: &mut NetworkParams, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidParam {
            name: "lr",
            reason: format!("{lr} must be > 0"),
        });
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    let mut opt = std::mem::replace(&mut params.opt, AdamState::empty());
    opt.step += 1;
    let t = opt.step as f64;
    let bc1 = 1.0 - BETA1.powf(t);
    let bc2 = 1.0 - BETA2.powf(t);
    for i in 0..params.tensor_count() {
        let tensor = params.tensor_mut(i);
        let g = grads.tensor(i);
        let m = &mut opt.m[i];
        let v = &mut opt.v[i];
        for j in 0..tensor.len() {
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            tensor[j] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    params.opt = opt;
    Ok(())
}
