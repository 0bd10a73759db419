use serde::{Deserialize, Serialize};

use super::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling applied before the moment update.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(num_params: usize) -> Self {
        AdamState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }
}

/// Rescales `grads` in place so its L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// One Adam update with decoupled weight decay. Returns the pre-clip
/// gradient norm.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
    cfg: &AdamConfig,
) -> f64 {
    let mut g = grads.to_flat();
    let mut p = params.to_flat();
    assert_eq!(
        g.len(),
        state.m.len(),
        "optimizer state does not match the model"
    );
    let norm = clip_grad_norm(&mut g, cfg.clip_norm);
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for k in 0..p.len() {
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g[k];
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
        let m_hat = state.m[k] / bc1;
        let v_hat = state.v[k] / bc2;
        p[k] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + weight_decay * p[k]);
    }
    params.set_flat(&p).expect("same layout");
    norm
}
