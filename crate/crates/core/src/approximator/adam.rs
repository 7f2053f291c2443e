use serde::{Deserialize, Serialize};

use super::mlp::{GradientSet, Mlp};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First/second moment estimates over a network's flattened parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(mlp: &Mlp) -> Self {
        let n = mlp.parameter_count();
        AdamState {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Pure Adam update: returns the new parameters and optimizer state.
pub fn adam_step(params: &Mlp, grads: &GradientSet, state: &AdamState, lr: f64) -> Result<(Mlp, AdamState)> {
    let mut p = params.clone();
    let mut s = state.clone();
    adam_step_in_place(&mut p, grads, &mut s, lr)?;
    Ok((p, s))
}

pub fn adam_step_in_place(params: &mut Mlp, grads: &GradientSet, state: &mut AdamState, lr: f64) -> Result<()> {
    let n = params.parameter_count();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::shape("optimizer state or gradient does not match the parameters"));
    }
    if !(lr > 0.0) {
        return Err(Error::Argument(format!("learning rate must be positive, got {lr}")));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (((p, g), m), v) in params
        .params_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
    Ok(())
}
