use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::nets::{GradientSet, Parameters};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new<P: Parameters + ?Sized>(params: &P) -> Self {
        let shapes: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
        OptimizerState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<P: Parameters + ?Sized>(
    params: &mut P,
    grads: &GradientSet,
    state: &mut OptimizerState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !grads.is_congruent(params) || state.m.len() != grads.tensors.len() {
        return Err(Error::shape(
            "adam_step",
            params.param_slices().len(),
            grads.tensors.len(),
        ));
    }
    if state.m.iter().zip(&grads.tensors).any(|(m, g)| m.len() != g.len()) {
        return Err(Error::shape("adam_step", "moment arrays matching the gradients", "mismatch"));
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for (((p, g), m), v) in params
        .param_slices_mut()
        .into_iter()
        .zip(&grads.tensors)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (math::sqrt(v_hat) + cfg.eps);
        }
    }
    Ok(())
}
