//! Gradient-based one-side sampling.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng;

/// Keep the `ceil(a n)` rows with the largest `|gradient|` at weight 1, then
/// draw `ceil(b n)` of the rest uniformly without replacement at weight
/// `(1 - a) / b`. Returned indices are ascending.
pub fn goss_sample(grad_norms: &[f64], a: f64, b: f64, seed: u64) -> Result<(Vec<usize>, Vec<f64>)> {
    if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!("GOSS fractions a = {a}, b = {b}")));
    }
    let n = grad_norms.len();
    let count = |frac: f64| (((frac * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n);
    let n_top = count(a);
    let n_rand = count(b).min(n - n_top);
    if b > 0.0 && n as f64 * b < 1.0 {
        return Err(Error::InvalidArgument(format!("GOSS b = {b} samples no rows out of {n}")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable: equal magnitudes keep the lower index first.
    order.sort_by(|&i, &j| grad_norms[j].abs().total_cmp(&grad_norms[i].abs()));
    let mut chosen: Vec<(usize, f64)> = order[..n_top].iter().map(|&i| (i, 1.0)).collect();
    let rest = &order[n_top..];
    if n_rand > 0 {
        let amplify = (1.0 - a) / b;
        let mut rng = rng::rng(seed);
        chosen.extend(index::sample(&mut rng, rest.len(), n_rand).into_iter().map(|p| (rest[p], amplify)));
    }
    chosen.sort_by_key(|&(i, _)| i);
    Ok(chosen.into_iter().unzip())
}
