use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use super::network::{Gradients, NetworkParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moments for every parameter, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<(Array2<f64>, Array1<f64>)>,
    pub v: Vec<(Array2<f64>, Array1<f64>)>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        let zeros: Vec<_> = params
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

fn update<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    cfg: &AdamConfig,
    bc1: f64,
    bc2: f64,
) {
    Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    });
}

/// One bias-corrected Adam update. `name` labels the network in errors.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
    name: &str,
) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(Error::LengthMismatch {
            left: grads.layers.len(),
            right: params.layers.len(),
        });
    }
    if let Some(l) = grads.non_finite_layer() {
        return Err(Error::NonFiniteGradient {
            layer: format!("{name} layer {l}"),
        });
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.step as i32);
    for (l, layer) in params.layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[l];
        let (mw, mb) = &mut state.m[l];
        let (vw, vb) = &mut state.v[l];
        update(&mut layer.weights, gw, mw, vw, cfg, bc1, bc2);
        update(&mut layer.bias, gb, mb, vb, cfg, bc1, bc2);
    }
    Ok(())
}
