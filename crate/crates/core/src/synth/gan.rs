//! Encoding, generator output head, adversarial losses and their gradients.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, NetworkParams};
use crate::dataset::{FeatureSchema, TabularDataset};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Output probabilities are kept this far from 0 and 1.
pub const PROB_CLAMP: f64 = 1e-12;

/// Encoded column range of each feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub starts: Vec<usize>,
    pub widths: Vec<usize>,
    pub categorical: Vec<bool>,
}

impl ColumnLayout {
    pub fn from_schema(schema: &FeatureSchema) -> Self {
        let mut starts = Vec::with_capacity(schema.len());
        let mut widths = Vec::with_capacity(schema.len());
        let mut at = 0;
        for f in &schema.features {
            let w = if f.is_categorical() { f.levels.len() } else { 1 };
            starts.push(at);
            widths.push(w);
            at += w;
        }
        ColumnLayout {
            starts,
            widths,
            categorical: schema.features.iter().map(|f| f.is_categorical()).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.starts.last().map_or(0, |s| s + self.widths.last().unwrap())
    }

    pub fn n_features(&self) -> usize {
        self.starts.len()
    }

    /// Inverse of [`encode`]: numeric columns pass through, categorical
    /// blocks become the index of their largest entry.
    pub fn decode(&self, encoded: ArrayView2<f64>) -> Vec<Vec<f64>> {
        encoded
            .rows()
            .into_iter()
            .map(|row| {
                (0..self.n_features())
                    .map(|j| {
                        let block = row.slice(s![self.starts[j]..self.starts[j] + self.widths[j]]);
                        if self.categorical[j] {
                            let mut best = 0;
                            for (i, &v) in block.iter().enumerate() {
                                if v > block[best] {
                                    best = i;
                                }
                            }
                            best as f64
                        } else {
                            block[0]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Numeric features pass through, categorical features become one-hot.
pub fn encode(data: &TabularDataset) -> Result<(Array2<f64>, ColumnLayout)> {
    let layout = ColumnLayout::from_schema(data.schema());
    let mut out = Array2::zeros((data.n_rows(), layout.width()));
    for (i, row) in data.rows().iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if layout.categorical[j] {
                out[[i, layout.starts[j] + v as usize]] = 1.0;
            } else if (0.0..=1.0).contains(&v) {
                out[[i, layout.starts[j]]] = v;
            } else {
                return Err(Error::InvalidArgument(format!(
                    "row {i}, feature `{}`: value {v} outside [0, 1]",
                    data.schema().features[j].name
                )));
            }
        }
    }
    Ok((out, layout))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Generator output activations: logistic on numeric columns, softmax of
/// `(logits + noise) / tau` on each categorical block.
pub fn head_forward(layout: &ColumnLayout, logits: &Array2<f64>, noise: Option<&Array2<f64>>, tau: f64) -> Array2<f64> {
    let mut out = logits.clone();
    for j in 0..layout.n_features() {
        let (a, w) = (layout.starts[j], layout.widths[j]);
        if !layout.categorical[j] {
            out.column_mut(a).mapv_inplace(sigmoid);
            continue;
        }
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let mut block = row.slice_mut(s![a..a + w]);
            if let Some(g) = noise {
                block += &g.slice(s![i, a..a + w]);
            }
            block.mapv_inplace(|v| v / tau);
            let max = block.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            block.mapv_inplace(|v| (v - max).exp());
            let sum = block.sum();
            block.mapv_inplace(|v| v / sum);
        }
    }
    out
}

/// `dL/d(logits)` from `dL/d(out)`, where `out = head_forward(..)`.
pub fn head_backward(layout: &ColumnLayout, out: &Array2<f64>, d_out: &Array2<f64>, tau: f64) -> Array2<f64> {
    let mut d = d_out.clone();
    for j in 0..layout.n_features() {
        let (a, w) = (layout.starts[j], layout.widths[j]);
        if !layout.categorical[j] {
            for i in 0..out.nrows() {
                let y = out[[i, a]];
                d[[i, a]] *= y * (1.0 - y);
            }
            continue;
        }
        for i in 0..out.nrows() {
            let y = out.slice(s![i, a..a + w]);
            let dy = d_out.slice(s![i, a..a + w]);
            let dot: f64 = y.iter().zip(dy.iter()).map(|(y, g)| y * g).sum();
            for c in 0..w {
                d[[i, a + c]] = y[c] * (dy[c] - dot) / tau;
            }
        }
    }
    d
}

/// Standard Gumbel draws in the categorical columns, zeros elsewhere.
pub fn gumbel_noise(layout: &ColumnLayout, rows: usize, rng: &mut Rng) -> Array2<f64> {
    let mut g = Array2::zeros((rows, layout.width()));
    for i in 0..rows {
        for j in (0..layout.n_features()).filter(|&j| layout.categorical[j]) {
            for c in 0..layout.widths[j] {
                let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                g[[i, layout.starts[j] + c]] = -(-u.ln()).ln();
            }
        }
    }
    g
}

pub fn normal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub fn one_hot(classes: &[usize], k: usize) -> Array2<f64> {
    let mut m = Array2::zeros((classes.len(), k));
    for (i, &c) in classes.iter().enumerate() {
        m[[i, c]] = 1.0;
    }
    m
}

fn hcat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    concatenate![Axis(1), *a, *b]
}

/// Generator output for latent `z` and one-hot `condition`. Categorical
/// blocks are softmax probabilities at temperature `tau`, perturbed by
/// `noise` when given.
pub fn generator_forward(
    gen: &NetworkParams,
    layout: &ColumnLayout,
    z: &Array2<f64>,
    condition: &Array2<f64>,
    noise: Option<&Array2<f64>>,
    tau: f64,
) -> Array2<f64> {
    head_forward(layout, &gen.forward(&hcat(z, condition)), noise, tau)
}

/// Discriminator BCE loss, real rows labeled 1 and generated rows 0, and its
/// gradient with respect to the discriminator parameters.
pub fn discriminator_step(
    disc: &NetworkParams,
    real: &Array2<f64>,
    fake: &Array2<f64>,
    condition: &Array2<f64>,
) -> (f64, Gradients) {
    let b = real.nrows();
    let input = concatenate![Axis(0), hcat(real, condition), hcat(fake, condition)];
    let (logits, cache) = disc.forward_cached(&input);
    let mut loss = 0.0;
    let mut d = Array2::zeros((2 * b, 1));
    for i in 0..2 * b {
        let l = logits[[i, 0]];
        if i < b {
            loss += softplus(-l);
            d[[i, 0]] = (sigmoid(l) - 1.0) / b as f64;
        } else {
            loss += softplus(l);
            d[[i, 0]] = sigmoid(l) / b as f64;
        }
    }
    let (grads, _) = disc.backward(&cache, d);
    (loss / b as f64, grads)
}

/// Non-saturating generator loss `mean(-ln D(G(z, c), c))` and its gradient
/// with respect to the generator parameters.
pub fn generator_step(
    gen: &NetworkParams,
    disc: &NetworkParams,
    layout: &ColumnLayout,
    z: &Array2<f64>,
    condition: &Array2<f64>,
    noise: &Array2<f64>,
    tau: f64,
) -> (f64, Gradients) {
    let b = z.nrows();
    let (raw, g_cache) = gen.forward_cached(&hcat(z, condition));
    let fake = head_forward(layout, &raw, Some(noise), tau);
    let (logits, d_cache) = disc.forward_cached(&hcat(&fake, condition));
    let mut loss = 0.0;
    let mut d = Array2::zeros((b, 1));
    for i in 0..b {
        let l = logits[[i, 0]];
        loss += softplus(-l);
        d[[i, 0]] = (sigmoid(l) - 1.0) / b as f64;
    }
    let d_input = disc.backward_input(&d_cache, d);
    let d_fake = d_input.slice(s![.., ..layout.width()]).to_owned();
    let d_raw = head_backward(layout, &fake, &d_fake, tau);
    let (grads, _) = gen.backward(&g_cache, d_raw);
    (loss / b as f64, grads)
}

/// Largest relative error between analytic and central-difference
/// gradients, for each loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub discriminator: f64,
    pub generator: f64,
}

fn max_relative_error(
    params: &NetworkParams,
    analytic: &Gradients,
    loss: impl Fn(&NetworkParams) -> f64,
) -> f64 {
    const H: f64 = 1e-5;
    const FLOOR: f64 = 1e-6;
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for l in 0..params.layers.len() {
        let n_w = params.layers[l].weights.len();
        for idx in 0..n_w + params.layers[l].bias.len() {
            let (orig, exact) = if idx < n_w {
                let ij = (idx / params.layers[l].weights.ncols(), idx % params.layers[l].weights.ncols());
                (params.layers[l].weights[ij], analytic.layers[l].0[ij])
            } else {
                (params.layers[l].bias[idx - n_w], analytic.layers[l].1[idx - n_w])
            };
            let set = |p: &mut NetworkParams, v: f64| {
                if idx < n_w {
                    let c = p.layers[l].weights.ncols();
                    p.layers[l].weights[(idx / c, idx % c)] = v;
                } else {
                    p.layers[l].bias[idx - n_w] = v;
                }
            };
            set(&mut probe, orig + H);
            let up = loss(&probe);
            set(&mut probe, orig - H);
            let down = loss(&probe);
            set(&mut probe, orig);
            let numeric = (up - down) / (2.0 * H);
            let err = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

/// Compare both losses' analytic gradients against central finite
/// differences on a small batch of `data` at fixed noise.
pub fn gradient_check(
    gen: &NetworkParams,
    disc: &NetworkParams,
    layout: &ColumnLayout,
    real: &Array2<f64>,
    classes: &[usize],
    k: usize,
    tau: f64,
    rng: &mut Rng,
) -> GradientCheck {
    let b = real.nrows();
    let cond = one_hot(classes, k);
    let latent = gen.input_dim() - k;
    let z = normal_matrix(b, latent, rng);
    let noise = gumbel_noise(layout, b, rng);
    let fake = generator_forward(gen, layout, &z, &cond, Some(&noise), tau);

    let (_, d_grads) = discriminator_step(disc, real, &fake, &cond);
    let d_err = max_relative_error(disc, &d_grads, |d| discriminator_step(d, real, &fake, &cond).0);

    let (_, g_grads) = generator_step(gen, disc, layout, &z, &cond, &noise, tau);
    let g_err = max_relative_error(gen, &g_grads, |g| generator_step(g, disc, layout, &z, &cond, &noise, tau).0);

    GradientCheck {
        discriminator: d_err,
        generator: g_err,
    }
}
