use super::layers::{LayerGrads, LayerParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m_weights: Vec<f32>,
    pub v_weights: Vec<f32>,
    pub m_biases: Vec<f32>,
    pub v_biases: Vec<f32>,
    pub step: u64,
}

impl AdamMoments {
    pub fn new(weights: usize, biases: usize) -> Self {
        Self {
            m_weights: vec![0.0; weights],
            v_weights: vec![0.0; weights],
            m_biases: vec![0.0; biases],
            v_biases: vec![0.0; biases],
            step: 0,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update(params: &mut [f32], grads: &[f32], m: &mut [f32], v: &mut [f32], lr: f32, bc1: f32, bc2: f32, cfg: &AdamConfig) {
    let (b1, b2, eps) = (cfg.beta1 as f32, cfg.beta2 as f32, cfg.epsilon as f32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One bias-corrected Adam update of a layer.
pub fn adam_step(layer: &mut LayerParams, grads: &LayerGrads, lr: f32, cfg: &AdamConfig) -> Result<()> {
    if grads.weights.len() != layer.weights().len() || grads.biases.len() != layer.biases().len() {
        return Err(Error::Shape("gradient shape does not match layer".into()));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    let (weights, biases, moments) = layer.parts_mut();
    moments.step += 1;
    let t = moments.step as i32;
    let bc1 = (1.0 - cfg.beta1.powi(t)) as f32;
    let bc2 = (1.0 - cfg.beta2.powi(t)) as f32;
    update(weights, &grads.weights, &mut moments.m_weights, &mut moments.v_weights, lr, bc1, bc2, cfg);
    update(biases, &grads.biases, &mut moments.m_biases, &mut moments.v_biases, lr, bc1, bc2, cfg);
    Ok(())
}
