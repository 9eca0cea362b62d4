//! Multiclass cross-entropy over softmax.

use crate::error::{Error, Result};

/// Numerically stable softmax of one score row.
pub fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln p_label` computed through log-sum-exp.
pub fn cross_entropy(raw: &[f64], label: usize) -> f64 {
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + raw.iter().map(|&s| (s - max).exp()).sum::<f64>().ln();
    lse - raw[label]
}

/// Mean cross-entropy over rows of an `n x k` row-major score matrix.
pub fn mean_cross_entropy(labels: &[usize], raw_scores: &[f64], k: usize) -> f64 {
    let n = labels.len();
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| cross_entropy(&raw_scores[i * k..(i + 1) * k], y))
        .sum::<f64>()
        / n.max(1) as f64
}

/// Gradients and diagonal hessians of the per-row cross-entropy with respect
/// to the raw scores: `g = p - onehot(y)`, `h = p (1 - p)`. All matrices are
/// `n x k` row-major.
pub fn softmax_gradients(labels: &[usize], raw_scores: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if raw_scores.len() != labels.len() * k {
        return Err(Error::LengthMismatch {
            left: raw_scores.len(),
            right: labels.len() * k,
        });
    }
    let mut g = vec![0.0; raw_scores.len()];
    let mut h = vec![0.0; raw_scores.len()];
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidArgument(format!("label {y} outside 0..{k}")));
        }
        let p = softmax(&raw_scores[i * k..(i + 1) * k]);
        for c in 0..k {
            let target = if c == y { 1.0 } else { 0.0 };
            g[i * k + c] = p[c] - target;
            h[i * k + c] = p[c] * (1.0 - p[c]);
        }
    }
    Ok((g, h))
}
