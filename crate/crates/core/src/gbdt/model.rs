use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::{quantile_bin, BinMapper};
use super::bundling::{efb_bundle, singleton_bundles, BundledMatrix, FeatureBundle};
use super::goss::goss_sample;
use super::objective::{mean_cross_entropy, softmax, softmax_gradients};
use super::tree::{grow_tree, Tree};
use super::TrainConfig;
use crate::dataset::{FeatureSchema, TabularDataset};
use crate::error::{Error, Result};
use crate::rng;

pub const MODEL_FORMAT: &str = "stormdamage-gbdt";
pub const MODEL_VERSION: u32 = 1;

/// Smallest class prior used for base scores, so absent classes stay finite.
const MIN_PRIOR: f64 = 1e-12;

/// A trained ensemble: `raw_c(x) = base_c + learning_rate * sum_t tree[t][c](x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub schema: FeatureSchema,
    pub n_classes: usize,
    pub learning_rate: f64,
    pub bin_mapper: BinMapper,
    pub bundles: Vec<FeatureBundle>,
    pub base_scores: Vec<f64>,
    /// `trees[iteration][class]`.
    pub trees: Vec<Vec<Tree>>,
    pub config: TrainConfig,
    /// Mean training cross-entropy before the first round and after each.
    pub training_loss: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ModelFile<T> {
    pub(crate) format: String,
    pub(crate) version: u32,
    pub(crate) model: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// Verify the `format` / `version` envelope of a model file.
pub(crate) fn check_header(text: &str, format: &str, version: u32) -> Result<()> {
    let header: Header = serde_json::from_str(text)?;
    if header.format != format {
        return Err(Error::Format(format!("expected `{format}`, found `{}`", header.format)));
    }
    if header.version != version {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    Ok(())
}

pub fn train(data: &TabularDataset, labels: &[usize], n_classes: usize, config: &TrainConfig) -> Result<GbdtModel> {
    train_impl(data, labels, n_classes, config, true)
}

pub(crate) fn train_impl(
    data: &TabularDataset,
    labels: &[usize],
    n_classes: usize,
    config: &TrainConfig,
    require_two_classes: bool,
) -> Result<GbdtModel> {
    config.validate()?;
    let n = data.n_rows();
    let k = n_classes;
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: n,
        });
    }
    if n == 0 {
        return Err(Error::Empty("training rows"));
    }
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least two classes, got k = {k}")));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 0..{k}")));
    }
    let mut counts = vec![0usize; k];
    for &y in labels {
        counts[y] += 1;
    }
    if require_two_classes && counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClass);
    }

    let (bin_mapper, binned) = quantile_bin(data, config.max_bins)?;
    let bundles = if config.efb_enabled {
        efb_bundle(&binned, config.efb_max_conflict)
    } else {
        singleton_bundles(&binned)
    };
    let bundled = BundledMatrix::new(&binned, bundles);

    let base_scores: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / n as f64).max(MIN_PRIOR).ln())
        .collect();
    let mut scores: Vec<f64> = (0..n).flat_map(|_| base_scores.iter().copied()).collect();
    let mut training_loss = vec![mean_cross_entropy(labels, &scores, k)];
    let use_goss = config.goss_enabled && config.goss_a + config.goss_b < 1.0 && n as f64 * config.goss_b >= 1.0;

    let mut trees = Vec::with_capacity(config.num_trees);
    for t in 0..config.num_trees {
        let (g, h) = softmax_gradients(labels, &scores, k)?;
        let weights = if use_goss {
            let norms: Vec<f64> = g.chunks(k).map(|row| row.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
            let (idx, w) = goss_sample(&norms, config.goss_a, config.goss_b, rng::derive_seed(config.seed, t as u64))?;
            let mut full = vec![0.0; n];
            for (i, w) in idx.into_iter().zip(w) {
                full[i] = w;
            }
            full
        } else {
            vec![1.0; n]
        };
        let round: Vec<Tree> = (0..k)
            .into_par_iter()
            .map(|c| {
                let gc: Vec<f64> = g.iter().skip(c).step_by(k).copied().collect();
                let hc: Vec<f64> = h.iter().skip(c).step_by(k).copied().collect();
                grow_tree(&bundled, &binned.n_bins, &binned.categorical, &gc, &hc, &weights, config)
            })
            .collect();
        scores.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
            for (c, tree) in round.iter().enumerate() {
                row[c] += config.learning_rate * tree.evaluate(|f| binned.columns[f][i]);
            }
        });
        training_loss.push(mean_cross_entropy(labels, &scores, k));
        trees.push(round);
    }

    Ok(GbdtModel {
        schema: data.schema().clone(),
        n_classes: k,
        learning_rate: config.learning_rate,
        bin_mapper,
        bundles: bundled.bundles,
        base_scores,
        trees,
        config: config.clone(),
        training_loss,
    })
}

impl GbdtModel {
    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn predict_raw(&self, row: &[f64]) -> Result<Vec<f64>> {
        let bins = self.bin_mapper.bin_row(row).map_err(|e| match e {
            Error::UnknownLevel { feature, level } => {
                let name = feature
                    .strip_prefix('#')
                    .and_then(|j| j.parse::<usize>().ok())
                    .and_then(|j| self.schema.features.get(j))
                    .map_or(feature, |f| f.name.clone());
                Error::UnknownLevel { feature: name, level }
            }
            other => other,
        })?;
        let mut raw = self.base_scores.clone();
        for round in &self.trees {
            for (c, tree) in round.iter().enumerate() {
                raw[c] += self.learning_rate * tree.evaluate(|f| bins[f]);
            }
        }
        Ok(raw)
    }

    /// Class probabilities for one row (softmax of the raw scores).
    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.predict_raw(row).map(|raw| softmax(&raw))
    }

    pub fn predict_proba_batch(&self, data: &TabularDataset) -> Result<Vec<Vec<f64>>> {
        if data.schema() != &self.schema {
            return Err(Error::Schema("dataset schema differs from the model's".into()));
        }
        data.rows().par_iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn predict_class(&self, row: &[f64]) -> Result<usize> {
        self.predict_proba(row).map(|p| argmax(&p))
    }

    pub fn predict_classes(&self, data: &TabularDataset) -> Result<Vec<usize>> {
        Ok(self.predict_proba_batch(data)?.iter().map(|p| argmax(p)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        check_header(text, MODEL_FORMAT, MODEL_VERSION)?;
        let file: ModelFile<GbdtModel> = serde_json::from_str(text)?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Number of internal nodes splitting on each original feature.
pub fn split_importance(model: &GbdtModel) -> Vec<usize> {
    let mut counts = vec![0; model.n_features()];
    for tree in model.trees.iter().flatten() {
        for (feature, _, _) in tree.splits() {
            counts[feature] += 1;
        }
    }
    counts
}
