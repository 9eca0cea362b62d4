//! Fully connected networks with hand-written backpropagation.

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => f64::from(u8::from(z > 0.0)),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `inputs x outputs`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

/// Gradients shaped like the parameters, one `(weights, bias)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

/// Per-layer inputs and pre-activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl NetworkParams {
    /// `hidden` activation on every hidden layer, identity on the output.
    /// Glorot-uniform weights, zero biases.
    pub fn init(input: usize, hidden_dims: &[usize], output: usize, hidden: Activation, rng: &mut Rng) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden_dims);
        dims.push(output);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-limit..limit)),
                    bias: Array1::zeros(w[1]),
                    activation: if l + 2 == dims.len() { Activation::Identity } else { hidden },
                }
            })
            .collect();
        NetworkParams { layers }
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.nrows())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.ncols())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights) + &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, ForwardCache) {
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.clone();
        for layer in &self.layers {
            let z = h.dot(&layer.weights) + &layer.bias;
            let out = z.mapv(|v| layer.activation.apply(v));
            cache.inputs.push(h);
            cache.pre.push(z);
            h = out;
        }
        (h, cache)
    }

    /// Given `d_out = dL/d(output)`, returns parameter gradients and
    /// `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation != Activation::Identity {
                ndarray::Zip::from(&mut delta)
                    .and(&cache.pre[l])
                    .for_each(|d, &z| *d *= layer.activation.derivative(z));
            }
            let dw = cache.inputs[l].t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            let d_in = delta.dot(&layer.weights.t());
            grads.push((dw, db));
            delta = d_in;
        }
        grads.reverse();
        (Gradients { layers: grads }, delta)
    }

    /// `dL/d(input)` only, skipping parameter gradients.
    pub fn backward_input(&self, cache: &ForwardCache, d_out: Array2<f64>) -> Array2<f64> {
        let mut delta = d_out;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation != Activation::Identity {
                ndarray::Zip::from(&mut delta)
                    .and(&cache.pre[l])
                    .for_each(|d, &z| *d *= layer.activation.derivative(z));
            }
            delta = delta.dot(&layer.weights.t());
        }
        delta
    }
}

impl Gradients {
    /// Name of the first layer holding a non-finite entry.
    pub fn non_finite_layer(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|(w, b)| !w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }
}
