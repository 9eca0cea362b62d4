//! Damage-extent classes from per-cell claim sums via one-dimensional
//! k-means, plus the elbow curve used to pick `k`.

use std::io::Write;
use std::ops::RangeInclusive;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CellId, GridCell};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansResult {
    pub k: usize,
    /// Ascending.
    pub centroids: Vec<f64>,
    /// Cluster index per input point, in input order.
    pub assignments: Vec<usize>,
    pub wcss: f64,
}

struct Restart {
    centroids: Vec<f64>,
    /// Indexed by position in the sorted point list.
    assignments: Vec<usize>,
    wcss: f64,
}

fn nearest(centroids: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = (x - centroids[0]).abs();
    for (c, &m) in centroids.iter().enumerate().skip(1) {
        let d = (x - m).abs();
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn seed_plus_plus(xs: &[f64], k: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(xs[rng.random_range(0..xs.len())]);
    let mut d2: Vec<f64> = xs.iter().map(|&x| (x - centroids[0]).powi(2)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..xs.len())
        };
        let c = xs[pick];
        centroids.push(c);
        for (d, &x) in d2.iter_mut().zip(xs) {
            *d = d.min((x - c).powi(2));
        }
    }
    centroids
}

fn lloyd(xs: &[f64], mut centroids: Vec<f64>) -> Restart {
    let k = centroids.len();
    let mut assignments = vec![usize::MAX; xs.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (a, &x) in assignments.iter_mut().zip(xs) {
            let c = nearest(&centroids, x);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&a, &x) in assignments.iter().zip(xs) {
            sums[a] += x;
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c] / counts[c] as f64;
            }
        }
        // Empty clusters move to the point farthest from its own centroid.
        for c in 0..k {
            if counts[c] == 0 {
                let (far, _) = xs
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| (i, (x - centroids[assignments[i]]).abs()))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                centroids[c] = xs[far];
                counts[assignments[far]] -= 1;
                assignments[far] = c;
                counts[c] = 1;
            }
        }
    }
    hartigan(xs, &mut centroids, &mut assignments);
    // Relabel ascending by centroid.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centroids[a].total_cmp(&centroids[b]).then(a.cmp(&b)));
    let mut rank = vec![0; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let centroids: Vec<f64> = order.iter().map(|&c| centroids[c]).collect();
    let assignments: Vec<usize> = assignments.iter().map(|&a| rank[a]).collect();
    let wcss = xs
        .iter()
        .zip(&assignments)
        .map(|(&x, &a)| (x - centroids[a]).powi(2))
        .sum();
    Restart {
        centroids,
        assignments,
        wcss,
    }
}

/// Single-point transfers that lower wcss, until none remain.
fn hartigan(xs: &[f64], centroids: &mut [f64], assignments: &mut [usize]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k];
    for (&a, &x) in assignments.iter().zip(xs) {
        counts[a] += 1;
        sums[a] += x;
    }
    for _ in 0..MAX_ITERATIONS {
        let mut moved = false;
        for (i, &x) in xs.iter().enumerate() {
            let from = assignments[i];
            if counts[from] < 2 {
                continue;
            }
            let n_from = counts[from] as f64;
            let mean_from = sums[from] / n_from;
            let loss = n_from / (n_from - 1.0) * (x - mean_from).powi(2);
            let mut best = None;
            let mut best_gain = 1e-12 * (1.0 + loss);
            for to in (0..k).filter(|&c| c != from) {
                let n_to = counts[to] as f64;
                let cost = n_to / (n_to + 1.0) * (x - sums[to] / n_to).powi(2);
                if loss - cost > best_gain {
                    best_gain = loss - cost;
                    best = Some(to);
                }
            }
            if let Some(to) = best {
                counts[from] -= 1;
                sums[from] -= x;
                counts[to] += 1;
                sums[to] += x;
                assignments[i] = to;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    sums.iter_mut().for_each(|s| *s = 0.0);
    for (&a, &x) in assignments.iter().zip(xs) {
        sums[a] += x;
    }
    for c in 0..k {
        centroids[c] = sums[c] / counts[c] as f64;
    }
}

fn distinct_count(sorted: &[f64]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Lloyd's algorithm with k-means++ seeding and a single-point transfer
/// refinement, best of `restarts` by wcss.
///
/// Clustering runs on the sorted copy of `points`, so any permutation of the
/// input yields the same centroids and wcss, with assignments permuted along.
pub fn kmeans_1d(points: &[f64], k: usize, restarts: usize, seed: u64) -> Result<KmeansResult> {
    if points.is_empty() {
        return Err(Error::Empty("k-means input"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument("k-means points must be finite".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let xs: Vec<f64> = order.iter().map(|&i| points[i]).collect();
    let distinct = distinct_count(&xs);
    if k > distinct {
        return Err(Error::TooFewDistinct { k, distinct });
    }
    let restarts = restarts.max(1);
    let runs: Vec<Restart> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::rng_for(seed, r as u64);
            let init = seed_plus_plus(&xs, k, &mut rng);
            lloyd(&xs, init)
        })
        .collect();
    // Lowest wcss; ties resolved by restart index through stable iteration.
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.wcss < best.wcss { run } else { best })
        .expect("at least one restart");
    let mut assignments = vec![0; points.len()];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = best.assignments[pos];
    }
    Ok(KmeansResult {
        k,
        centroids: best.centroids,
        assignments,
        wcss: best.wcss,
    })
}

/// One `(k, wcss)` pair per `k` in the range.
pub fn elbow_curve(points: &[f64], k_range: RangeInclusive<usize>, restarts: usize, seed: u64) -> Result<Vec<(usize, f64)>> {
    if k_range.is_empty() || *k_range.start() == 0 {
        return Err(Error::InvalidArgument(format!("invalid k range {k_range:?}")));
    }
    k_range
        .map(|k| kmeans_1d(points, k, restarts, seed).map(|r| (k, r.wcss)))
        .collect()
}

/// Damage-extent class (0 = low) per cell, ordered by ascending centroid.
pub fn label_cells(cells: &[GridCell], k: usize, seed: u64) -> Result<Vec<(CellId, usize)>> {
    label_cells_with(cells, k, DEFAULT_RESTARTS, seed).map(|(labels, _)| labels)
}

pub fn label_cells_with(cells: &[GridCell], k: usize, restarts: usize, seed: u64) -> Result<(Vec<(CellId, usize)>, KmeansResult)> {
    if cells.is_empty() {
        return Err(Error::Empty("cells to label"));
    }
    let sums: Vec<f64> = cells.iter().map(|c| c.claim_sum).collect();
    let result = kmeans_1d(&sums, k, restarts, seed)?;
    let labels = cells
        .iter()
        .zip(&result.assignments)
        .map(|(c, &a)| (c.id(), a))
        .collect();
    Ok((labels, result))
}

pub fn write_labels<W: Write>(writer: W, cells: &[GridCell], labels: &[(CellId, usize)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["cell_col", "cell_row", "claim_sum", "pde_class"])?;
    for (cell, &(id, class)) in cells.iter().zip(labels) {
        debug_assert_eq!(cell.id(), id);
        wtr.write_record([
            id.0.to_string(),
            id.1.to_string(),
            cell.claim_sum.to_string(),
            class.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabelRow {
    pub cell_col: usize,
    pub cell_row: usize,
    pub claim_sum: f64,
    pub pde_class: usize,
}

pub fn read_labels<R: std::io::Read>(reader: R) -> Result<Vec<LabelRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_elbow<W: Write>(writer: W, curve: &[(usize, f64)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["k", "wcss"])?;
    for &(k, wcss) in curve {
        wtr.write_record([k.to_string(), wcss.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
