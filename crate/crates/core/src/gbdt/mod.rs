//! Histogram gradient-boosted decision trees for multiclass classification.
//!
//! Training bins each feature at training quantiles, optionally packs
//! mutually exclusive sparse features into shared histogram columns (EFB),
//! optionally subsamples rows by gradient magnitude (GOSS), and grows one
//! leaf-wise tree per class per boosting round against softmax
//! cross-entropy gradients.

pub mod binning;
pub mod bundling;
pub mod goss;
pub mod model;
pub mod objective;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use binning::{quantile_bin, BinMapper, BinnedMatrix, FeatureBins};
pub use bundling::{efb_bundle, BundledMatrix, FeatureBundle};
pub use goss::goss_sample;
pub use model::{split_importance, train, GbdtModel};
pub use objective::softmax_gradients;
pub use tree::{grow_tree, Tree, TreeNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub num_leaves: usize,
    pub max_depth: usize,
    pub min_data_in_leaf: usize,
    pub l2_lambda: f64,
    pub goss_enabled: bool,
    /// Fraction of rows kept by largest gradient magnitude.
    pub goss_a: f64,
    /// Fraction of rows sampled from the remainder.
    pub goss_b: f64,
    pub efb_enabled: bool,
    pub efb_max_conflict: f64,
    pub max_bins: usize,
    pub seed: u64,
    pub parallel_histograms: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_trees: 100,
            learning_rate: 0.1,
            num_leaves: 31,
            max_depth: 12,
            min_data_in_leaf: 20,
            l2_lambda: 1.0,
            goss_enabled: true,
            goss_a: 0.2,
            goss_b: 0.1,
            efb_enabled: true,
            efb_max_conflict: 0.0,
            max_bins: binning::DEFAULT_MAX_BINS,
            seed: 0,
            parallel_histograms: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.num_leaves < 2 {
            return fail(format!("num_leaves must be at least 2, got {}", self.num_leaves));
        }
        if self.max_depth < 1 {
            return fail("max_depth must be at least 1".into());
        }
        if self.min_data_in_leaf < 1 {
            return fail("min_data_in_leaf must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.l2_lambda >= 0.0) {
            return fail(format!("l2_lambda must be non-negative, got {}", self.l2_lambda));
        }
        if !(self.goss_a >= 0.0 && self.goss_b >= 0.0 && self.goss_a + self.goss_b <= 1.0) {
            return fail(format!("GOSS fractions a = {}, b = {} invalid", self.goss_a, self.goss_b));
        }
        if !(0.0..=1.0).contains(&self.efb_max_conflict) {
            return fail(format!("efb_max_conflict {} outside [0, 1]", self.efb_max_conflict));
        }
        if self.max_bins < 2 {
            return fail("max_bins must be at least 2".into());
        }
        Ok(())
    }
}
