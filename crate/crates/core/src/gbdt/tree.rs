//! Histogram split finding and leaf-wise tree growth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundling::BundledMatrix;
use super::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    /// Numeric splits send bins `<= threshold` left; categorical splits send
    /// the single bin `== threshold` left.
    Split {
        feature: usize,
        threshold: u32,
        categorical: bool,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Arena of nodes; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    /// Output for a row whose bin for feature `f` is `bin_of(f)`.
    pub fn evaluate(&self, bin_of: impl Fn(usize) -> u32) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    categorical,
                    left,
                    right,
                    ..
                } => {
                    let bin = bin_of(*feature);
                    let go_left = if *categorical { bin == *threshold } else { bin <= *threshold };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn splits(&self) -> impl Iterator<Item = (usize, u32, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Split {
                feature, threshold, gain, ..
            } => Some((*feature, *threshold, *gain)),
            TreeNode::Leaf { .. } => None,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BinStat {
    pub g: f64,
    pub h: f64,
    pub count: u32,
}

/// One histogram per bundle.
pub type Histogram = Vec<Vec<BinStat>>;

fn bundle_histogram(column: &[u32], total_bins: u32, rows: &[u32], g: &[f64], h: &[f64]) -> Vec<BinStat> {
    let mut hist = vec![BinStat::default(); total_bins as usize];
    for &r in rows {
        let r = r as usize;
        let slot = &mut hist[column[r] as usize];
        slot.g += g[r];
        slot.h += h[r];
        slot.count += 1;
    }
    hist
}

/// Per-bundle gradient histograms over `rows`. Each bundle is accumulated
/// serially in row order, so the parallel and serial paths agree bit for bit.
pub fn build_histogram(bundled: &BundledMatrix, rows: &[u32], g: &[f64], h: &[f64], parallel: bool) -> Histogram {
    let one = |b: usize| bundle_histogram(&bundled.columns[b], bundled.bundles[b].total_bins(), rows, g, h);
    if parallel {
        (0..bundled.bundles.len()).into_par_iter().map(one).collect()
    } else {
        (0..bundled.bundles.len()).map(one).collect()
    }
}

fn subtract(parent: &Histogram, child: &Histogram) -> Histogram {
    parent
        .iter()
        .zip(child)
        .map(|(p, c)| {
            p.iter()
                .zip(c)
                .map(|(p, c)| {
                    let count = p.count - c.count;
                    if count == 0 {
                        BinStat::default()
                    } else {
                        BinStat {
                            g: p.g - c.g,
                            h: p.h - c.h,
                            count,
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Bins of one original feature, reconstructed from its bundle histogram.
fn feature_histogram(hist: &Histogram, bundled: &BundledMatrix, feature: usize, n_bins: u32, total: BinStat) -> Vec<BinStat> {
    let (b, pos) = bundled.location[feature];
    let bundle = &bundled.bundles[b];
    if bundle.is_singleton() {
        return hist[b].clone();
    }
    let offset = bundle.offsets[pos] as usize;
    let mut out = vec![BinStat::default(); n_bins as usize];
    let mut rest = total;
    for bin in 1..n_bins as usize {
        let s = hist[b][offset + bin];
        out[bin] = s;
        rest.g -= s.g;
        rest.h -= s.h;
        rest.count -= s.count;
    }
    out[0] = rest;
    out
}

/// `G_L^2/(H_L+l) + G_R^2/(H_R+l) - (G_L+G_R)^2/(H_L+H_R+l)`.
pub fn split_gain(left_g: f64, left_h: f64, right_g: f64, right_h: f64, lambda: f64) -> f64 {
    let term = |g: f64, h: f64| {
        let d = h + lambda;
        if d > 0.0 {
            g * g / d
        } else {
            0.0
        }
    };
    term(left_g, left_h) + term(right_g, right_h) - term(left_g + right_g, left_h + right_h)
}

/// Newton leaf output `-G / (H + lambda)`.
pub fn leaf_value(g: f64, h: f64, lambda: f64) -> f64 {
    let d = h + lambda;
    if d > 0.0 {
        -g / d
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: u32,
    pub categorical: bool,
    pub gain: f64,
}

/// Best split over every feature and bin of a histogram. Equal gains keep the
/// lower feature index, then the lower bin.
pub fn find_best_split(
    hist: &Histogram,
    bundled: &BundledMatrix,
    n_bins: &[u32],
    categorical: &[bool],
    total: BinStat,
    config: &TrainConfig,
) -> Option<SplitCandidate> {
    let min_data = config.min_data_in_leaf as u32;
    let lambda = config.l2_lambda;
    let mut best: Option<SplitCandidate> = None;
    for feature in 0..n_bins.len() {
        if n_bins[feature] < 2 {
            continue;
        }
        let bins = feature_histogram(hist, bundled, feature, n_bins[feature], total);
        let mut consider = |threshold: u32, left: BinStat| {
            let right_count = total.count - left.count;
            if left.count < min_data || right_count < min_data {
                return;
            }
            let gain = split_gain(left.g, left.h, total.g - left.g, total.h - left.h, lambda);
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature,
                    threshold,
                    categorical: categorical[feature],
                    gain,
                });
            }
        };
        if categorical[feature] {
            for (bin, s) in bins.iter().enumerate() {
                if s.count > 0 {
                    consider(bin as u32, *s);
                }
            }
        } else {
            let mut left = BinStat::default();
            for (bin, s) in bins.iter().enumerate().take(bins.len() - 1) {
                left.g += s.g;
                left.h += s.h;
                left.count += s.count;
                consider(bin as u32, left);
            }
        }
    }
    best
}

struct Leaf {
    node: usize,
    rows: Vec<u32>,
    depth: usize,
    total: BinStat,
    hist: Histogram,
    best: Option<SplitCandidate>,
}

fn totals(rows: &[u32], g: &[f64], h: &[f64]) -> BinStat {
    let mut t = BinStat::default();
    for &r in rows {
        t.g += g[r as usize];
        t.h += h[r as usize];
    }
    t.count = rows.len() as u32;
    t
}

/// Grow one tree leaf-wise: repeatedly split the frontier leaf whose best
/// split has the largest gain, until `num_leaves` is reached or no leaf has
/// a positive-gain split that respects `max_depth` and `min_data_in_leaf`.
///
/// Rows with zero weight are excluded; the rest contribute `w * g` and
/// `w * h` to every histogram.
pub fn grow_tree(
    bundled: &BundledMatrix,
    n_bins: &[u32],
    categorical: &[bool],
    g: &[f64],
    h: &[f64],
    weights: &[f64],
    config: &TrainConfig,
) -> Tree {
    let wg: Vec<f64> = g.iter().zip(weights).map(|(g, w)| g * w).collect();
    let wh: Vec<f64> = h.iter().zip(weights).map(|(h, w)| h * w).collect();
    let rows: Vec<u32> = (0..g.len() as u32).filter(|&i| weights[i as usize] > 0.0).collect();
    let parallel = config.parallel_histograms;

    let splittable = |depth: usize, count: u32| depth < config.max_depth && count as usize >= 2 * config.min_data_in_leaf;
    let evaluate = |hist: &Histogram, total: BinStat, depth: usize| {
        if splittable(depth, total.count) {
            find_best_split(hist, bundled, n_bins, categorical, total, config)
        } else {
            None
        }
    };

    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let root_total = totals(&rows, &wg, &wh);
    let root_hist = build_histogram(bundled, &rows, &wg, &wh, parallel);
    let root_best = evaluate(&root_hist, root_total, 0);
    let mut leaves = vec![Leaf {
        node: 0,
        rows,
        depth: 0,
        total: root_total,
        hist: root_hist,
        best: root_best,
    }];

    while leaves.len() < config.num_leaves {
        let mut pick: Option<(usize, f64)> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(best) = leaf.best {
                if pick.is_none_or(|(_, g)| best.gain > g) {
                    pick = Some((i, best.gain));
                }
            }
        }
        let Some((i, _)) = pick else { break };
        let parent = leaves.swap_remove(i);
        let split = parent.best.expect("picked leaf has a split");

        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = parent.rows.iter().partition(|&&r| {
            let bin = bundled.member_bin(r as usize, split.feature);
            if split.categorical {
                bin == split.threshold
            } else {
                bin <= split.threshold
            }
        });
        let left_total = totals(&left_rows, &wg, &wh);
        let right_total = totals(&right_rows, &wg, &wh);
        let (left_hist, right_hist) = if left_rows.len() <= right_rows.len() {
            let small = build_histogram(bundled, &left_rows, &wg, &wh, parallel);
            let large = subtract(&parent.hist, &small);
            (small, large)
        } else {
            let small = build_histogram(bundled, &right_rows, &wg, &wh, parallel);
            let large = subtract(&parent.hist, &small);
            (large, small)
        };

        let left_node = nodes.len();
        nodes.push(TreeNode::Leaf { value: 0.0 });
        nodes.push(TreeNode::Leaf { value: 0.0 });
        nodes[parent.node] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            categorical: split.categorical,
            gain: split.gain,
            left: left_node,
            right: left_node + 1,
        };
        let depth = parent.depth + 1;
        let left_best = evaluate(&left_hist, left_total, depth);
        let right_best = evaluate(&right_hist, right_total, depth);
        leaves.push(Leaf {
            node: left_node,
            rows: left_rows,
            depth,
            total: left_total,
            hist: left_hist,
            best: left_best,
        });
        leaves.push(Leaf {
            node: left_node + 1,
            rows: right_rows,
            depth,
            total: right_total,
            hist: right_hist,
            best: right_best,
        });
    }

    for leaf in leaves {
        nodes[leaf.node] = TreeNode::Leaf {
            value: leaf_value(leaf.total.g, leaf.total.h, config.l2_lambda),
        };
    }
    Tree { nodes }
}
