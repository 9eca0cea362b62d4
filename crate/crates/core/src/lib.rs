//! Grid-level flood damage classification under heavy class imbalance.
//!
//! The pipeline aggregates building claims onto a uniform grid, labels each
//! cell with an ordinal damage class by one-dimensional k-means, augments the
//! rare classes with a conditional GAN, and classifies cells with a
//! histogram gradient-boosted tree ensemble tuned by random search.
//!
//! | module | concern |
//! |---|---|
//! | [`dataset`] | claim merging, capping, normalization, gridding, feature tables |
//! | [`labeling`] | k-means damage classes and elbow curves |
//! | [`gbdt`] | histogram GBDT with GOSS, EFB, leaf-wise growth |
//! | [`synth`] | class-conditional tabular GAN |
//! | [`metrics`] | confusion matrices, PR curves, AP/mAP, marginal similarity |
//! | [`tuning`] | stratified split, under-sampling, random and grid search |
//! | [`fixtures`] | deterministic synthetic stand-ins for claim and feature data |
//! | [`cli`] | config-driven pipeline commands |

pub mod cli;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod gbdt;
pub mod labeling;
pub mod metrics;
pub mod rng;
pub mod synth;
pub mod tuning;

pub use error::{Error, Result};
