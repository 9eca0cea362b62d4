//! Exclusive feature bundling.
//!
//! Bin 0 is each feature's default bin. A bundle packs the non-default bins
//! of its members into disjoint ranges: member `m` with `n_m` bins occupies
//! bundled values `offset_m + 1 ..= offset_m + n_m - 1`, and bundled value 0
//! means every member sits at its default bin.

use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub members: Vec<usize>,
    pub offsets: Vec<u32>,
    pub member_bins: Vec<u32>,
}

impl FeatureBundle {
    pub fn singleton(feature: usize, n_bins: u32) -> Self {
        FeatureBundle {
            members: vec![feature],
            offsets: vec![0],
            member_bins: vec![n_bins],
        }
    }

    fn push(&mut self, feature: usize, n_bins: u32) {
        let offset = match (self.offsets.last(), self.member_bins.last()) {
            (Some(&o), Some(&n)) => o + n.saturating_sub(1),
            _ => 0,
        };
        self.members.push(feature);
        self.offsets.push(offset);
        self.member_bins.push(n_bins);
    }

    pub fn total_bins(&self) -> u32 {
        match (self.offsets.last(), self.member_bins.last()) {
            (Some(&o), Some(&n)) => o + n.max(1),
            _ => 1,
        }
    }

    pub fn is_singleton(&self) -> bool {
        self.members.len() == 1
    }

    /// Bundled value for one row given each member's bin. When several
    /// members are non-default (a conflict) the first member wins.
    pub fn encode(&self, member_values: impl IntoIterator<Item = u32>) -> u32 {
        for (pos, bin) in member_values.into_iter().enumerate() {
            if bin != 0 {
                return self.offsets[pos] + bin;
            }
        }
        0
    }

    /// The bin of member `pos` implied by a bundled value.
    pub fn decode(&self, pos: usize, bundled: u32) -> u32 {
        let lo = self.offsets[pos];
        let hi = lo + self.member_bins[pos].saturating_sub(1);
        if bundled > lo && bundled <= hi {
            bundled - lo
        } else {
            0
        }
    }
}

fn nonzero_rows(column: &[u32]) -> Vec<u64> {
    let mut bits = vec![0u64; column.len().div_ceil(64)];
    for (i, &b) in column.iter().enumerate() {
        if b != 0 {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    bits
}

fn popcount_and(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as usize).sum()
}

/// Greedy bundling. Features are visited by descending non-default count
/// (ties by index) and placed in the first bundle whose accumulated conflict
/// count stays within `max_conflict * n_rows`; otherwise they open a new one.
pub fn efb_bundle(binned: &BinnedMatrix, max_conflict: f64) -> Vec<FeatureBundle> {
    let budget = (max_conflict.max(0.0) * binned.n_rows as f64).floor() as usize;
    let masks: Vec<Vec<u64>> = binned.columns.iter().map(|c| nonzero_rows(c)).collect();
    let counts: Vec<usize> = masks.iter().map(|m| m.iter().map(|w| w.count_ones() as usize).sum()).collect();
    let mut order: Vec<usize> = (0..binned.n_features()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));

    struct Open {
        bundle: FeatureBundle,
        occupied: Vec<u64>,
        conflicts: usize,
    }
    let mut open: Vec<Open> = Vec::new();
    for f in order {
        let mask = &masks[f];
        let slot = open
            .iter()
            .position(|b| b.conflicts + popcount_and(&b.occupied, mask) <= budget);
        match slot {
            Some(s) => {
                let b = &mut open[s];
                b.conflicts += popcount_and(&b.occupied, mask);
                for (o, m) in b.occupied.iter_mut().zip(mask) {
                    *o |= m;
                }
                b.bundle.push(f, binned.n_bins[f]);
            }
            None => open.push(Open {
                bundle: FeatureBundle::singleton(f, binned.n_bins[f]),
                occupied: mask.clone(),
                conflicts: 0,
            }),
        }
    }
    open.into_iter().map(|o| o.bundle).collect()
}

/// One singleton bundle per feature, in index order.
pub fn singleton_bundles(binned: &BinnedMatrix) -> Vec<FeatureBundle> {
    (0..binned.n_features())
        .map(|f| FeatureBundle::singleton(f, binned.n_bins[f]))
        .collect()
}

/// Bundled columns plus a lookup from original feature to (bundle, member
/// position).
#[derive(Debug, Clone)]
pub struct BundledMatrix {
    pub bundles: Vec<FeatureBundle>,
    pub columns: Vec<Vec<u32>>,
    pub location: Vec<(usize, usize)>,
}

impl BundledMatrix {
    pub fn new(binned: &BinnedMatrix, bundles: Vec<FeatureBundle>) -> Self {
        let mut location = vec![(usize::MAX, usize::MAX); binned.n_features()];
        for (b, bundle) in bundles.iter().enumerate() {
            for (pos, &f) in bundle.members.iter().enumerate() {
                location[f] = (b, pos);
            }
        }
        let columns = bundles
            .iter()
            .map(|bundle| {
                (0..binned.n_rows)
                    .map(|i| bundle.encode(bundle.members.iter().map(|&f| binned.columns[f][i])))
                    .collect()
            })
            .collect();
        BundledMatrix {
            bundles,
            columns,
            location,
        }
    }

    /// Bin of original `feature` at `row`, as seen through its bundle.
    pub fn member_bin(&self, row: usize, feature: usize) -> u32 {
        let (b, pos) = self.location[feature];
        self.bundles[b].decode(pos, self.columns[b][row])
    }
}
