//! Two-stage search: synthesizer hyperparameters by grid search, then
//! per-class under-sampling counts and GBDT hyperparameters by random search.

use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::gbdt::{self, GbdtModel, TrainConfig};
use crate::metrics::mean_average_precision;
use crate::rng::{derive_seed, rng, rng_for};
use crate::synth::{self, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: usize,
    pub hi: usize,
}

impl IntRange {
    pub const fn new(lo: usize, hi: usize) -> Self {
        IntRange { lo, hi }
    }

    pub fn contains(&self, v: usize) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    fn sample(&self, rng: &mut crate::rng::Rng) -> usize {
        rng.random_range(self.lo..=self.hi)
    }
}

/// Inclusive integer ranges sampled uniformly by [`random_search`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Rows kept per class by under-sampling.
    pub class_counts: Vec<IntRange>,
    pub num_leaves: IntRange,
    pub max_depth: IntRange,
    pub min_data_in_leaf: IntRange,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            class_counts: vec![IntRange::new(1000, 24000), IntRange::new(1000, 8000), IntRange::new(1000, 8000)],
            num_leaves: IntRange::new(10, 50),
            max_depth: IntRange::new(3, 15),
            min_data_in_leaf: IntRange::new(20, 100),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let ranges = self
            .class_counts
            .iter()
            .chain([&self.num_leaves, &self.max_depth, &self.min_data_in_leaf]);
        for r in ranges {
            if r.lo > r.hi || r.lo == 0 {
                return Err(Error::InvalidArgument(format!("invalid range [{}, {}]", r.lo, r.hi)));
            }
        }
        if self.class_counts.is_empty() {
            return Err(Error::Empty("search space class counts"));
        }
        Ok(())
    }

    pub fn contains(&self, p: &TrialParams) -> bool {
        p.class_counts.len() == self.class_counts.len()
            && self.class_counts.iter().zip(&p.class_counts).all(|(r, &v)| r.contains(v))
            && self.num_leaves.contains(p.num_leaves)
            && self.max_depth.contains(p.max_depth)
            && self.min_data_in_leaf.contains(p.min_data_in_leaf)
    }

    pub fn sample(&self, rng: &mut crate::rng::Rng) -> TrialParams {
        TrialParams {
            class_counts: self.class_counts.iter().map(|r| r.sample(rng)).collect(),
            num_leaves: self.num_leaves.sample(rng),
            max_depth: self.max_depth.sample(rng),
            min_data_in_leaf: self.min_data_in_leaf.sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialParams {
    pub class_counts: Vec<usize>,
    pub num_leaves: usize,
    pub max_depth: usize,
    pub min_data_in_leaf: usize,
}

impl TrialParams {
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            num_leaves: self.num_leaves,
            max_depth: self.max_depth,
            min_data_in_leaf: self.min_data_in_leaf,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: TrialParams,
    pub seed: u64,
    /// mAP on the evaluation rows; `None` when the trial failed.
    pub map_eval: Option<f64>,
    pub status: TrialStatus,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Index of the best non-failed trial.
    pub best: Option<usize>,
    pub trials: Vec<Trial>,
    /// The best trial's model, retrained from its seed.
    pub best_model: Option<GbdtModel>,
}

impl SearchResult {
    pub fn best_trial(&self) -> Option<&Trial> {
        self.best.map(|i| &self.trials[i])
    }
}

/// Train and test row indices, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Per class, shuffle and keep `round(train_frac * n_c)` rows for training,
/// clamped so both sides receive at least one row.
pub fn stratified_split(labels: &[usize], train_frac: f64, seed: u64) -> Result<Partition> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_frac} outside (0, 1)")));
    }
    if labels.is_empty() {
        return Err(Error::Empty("labels to split"));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut rng = rng(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, rows) in by_class.iter_mut().enumerate() {
        match rows.len() {
            0 => continue,
            1 => {
                return Err(Error::InsufficientRows {
                    class: c,
                    requested: 2,
                    available: 1,
                })
            }
            n => {
                rows.shuffle(&mut rng);
                let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
                train.extend_from_slice(&rows[..n_train]);
                test.extend_from_slice(&rows[n_train..]);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Partition { train, test, seed })
}

/// Uniformly sample exactly `targets[c]` rows of each class without
/// replacement; output keeps the original row order.
pub fn undersample(data: &TabularDataset, targets: &[usize], seed: u64) -> Result<TabularDataset> {
    let labels = data.require_labels()?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); targets.len()];
    for (i, &y) in labels.iter().enumerate() {
        match by_class.get_mut(y) {
            Some(rows) => rows.push(i),
            None => return Err(Error::InvalidArgument(format!("label {y} has no target count"))),
        }
    }
    let mut rng = rng(seed);
    let mut keep = Vec::with_capacity(targets.iter().sum());
    for (c, (rows, &target)) in by_class.iter().zip(targets).enumerate() {
        if target > rows.len() {
            return Err(Error::InsufficientRows {
                class: c,
                requested: target,
                available: rows.len(),
            });
        }
        keep.extend(index::sample(&mut rng, rows.len(), target).into_iter().map(|i| rows[i]));
    }
    keep.sort_unstable();
    Ok(data.subset(&keep))
}

fn run_trial(
    pool: &TabularDataset,
    eval_set: &TabularDataset,
    params: &TrialParams,
    fixed: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<(f64, GbdtModel)> {
    let train = undersample(pool, &params.class_counts, derive_seed(seed, 0))?;
    let config = TrainConfig {
        seed: derive_seed(seed, 1),
        ..params.apply(fixed)
    };
    let model = gbdt::train(&train, train.require_labels()?, k, &config)?;
    let probs = model.predict_proba_batch(eval_set)?;
    let map = mean_average_precision(&probs, eval_set.require_labels()?, k)?.map;
    Ok((map, model))
}

/// Sample hyperparameters, under-sample `pool`, train, and score mAP on
/// `eval_set`, `iterations` times. Trials run in parallel; the log is in
/// trial order. Failed trials are recorded and skipped. The best trial is
/// the highest mAP, ties to the lower index.
pub fn random_search(
    pool: &TabularDataset,
    eval_set: &TabularDataset,
    space: &SearchSpace,
    iterations: usize,
    fixed: &TrainConfig,
    seed: u64,
) -> Result<SearchResult> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    space.validate()?;
    let k = space.class_counts.len();
    let eval_labels = eval_set.require_labels()?;
    let missing: Vec<usize> = (0..k).filter(|c| !eval_labels.contains(c)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let trials: Vec<Trial> = (0..iterations)
        .into_par_iter()
        .map(|t| {
            let params = space.sample(&mut rng_for(seed, 2 * t as u64));
            let trial_seed = derive_seed(seed, 2 * t as u64 + 1);
            let (map_eval, status) = match run_trial(pool, eval_set, &params, fixed, k, trial_seed) {
                Ok((map, _)) => (Some(map), TrialStatus::Ok),
                Err(e) => (None, TrialStatus::Failed(e.to_string())),
            };
            Trial {
                index: t,
                params,
                seed: trial_seed,
                map_eval,
                status,
            }
        })
        .collect();
    let mut best: Option<usize> = None;
    for t in &trials {
        if let Some(m) = t.map_eval {
            if best.is_none_or(|b| m > trials[b].map_eval.unwrap()) {
                best = Some(t.index);
            }
        }
    }
    let best_model = match best {
        Some(b) => Some(run_trial(pool, eval_set, &trials[b].params, fixed, k, trials[b].seed)?.1),
        None => None,
    };
    Ok(SearchResult {
        best,
        trials,
        best_model,
    })
}

pub fn write_trials<W: Write>(writer: W, trials: &[Trial]) -> Result<()> {
    let k = trials.first().map_or(3, |t| t.params.class_counts.len());
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..k).map(|c| format!("class{c}")).collect();
    header.insert(0, "trial".into());
    header.extend(["num_leaves", "max_depth", "min_data_in_leaf", "map_eval", "status"].map(String::from));
    wtr.write_record(&header)?;
    for t in trials {
        let mut rec = vec![t.index.to_string()];
        rec.extend(t.params.class_counts.iter().map(|c| c.to_string()));
        rec.push(t.params.num_leaves.to_string());
        rec.push(t.params.max_depth.to_string());
        rec.push(t.params.min_data_in_leaf.to_string());
        rec.push(t.map_eval.map_or_else(String::new, |m| m.to_string()));
        rec.push(match &t.status {
            TrialStatus::Ok => "ok".into(),
            TrialStatus::Failed(msg) => format!("failed: {msg}"),
        });
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Synthesizer hyperparameters explored by [`grid_search_synth`]. Each
/// `(gen_lr, disc_lr)` pair is fit once, snapshotting at every epoch count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGrid {
    pub gen_lr: Vec<f64>,
    pub disc_lr: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl SynthGrid {
    pub fn n_cells(&self) -> usize {
        self.gen_lr.len() * self.disc_lr.len() * self.epochs.len()
    }
}

/// How each grid cell's synthetic data is generated and scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentProtocol {
    pub n_samples: usize,
    pub class_ratios: Vec<f64>,
    /// Fraction of the synthetic rows used to train; the rest score the
    /// pretraining mAP.
    pub train_frac: f64,
    pub gbdt: TrainConfig,
}

impl Default for AugmentProtocol {
    fn default() -> Self {
        AugmentProtocol {
            n_samples: 50_000,
            class_ratios: vec![0.6, 0.2, 0.2],
            train_frac: 0.8,
            gbdt: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub epochs: usize,
    /// mAP on held-out synthetic rows.
    pub pretrain_map: Option<f64>,
    /// mAP on the real test rows.
    pub real_map: Option<f64>,
    pub status: TrialStatus,
}

fn score_snapshot(
    model: &synth::SynthesizerModel,
    test: &TabularDataset,
    protocol: &AugmentProtocol,
    k: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let pool = model.sample(protocol.n_samples, &protocol.class_ratios, derive_seed(seed, 0))?;
    let split = stratified_split(pool.require_labels()?, protocol.train_frac, derive_seed(seed, 1))?;
    let (train, holdout) = (pool.subset(&split.train), pool.subset(&split.test));
    let config = TrainConfig {
        seed: derive_seed(seed, 2),
        ..protocol.gbdt.clone()
    };
    let gbdt_model = gbdt::train(&train, train.require_labels()?, k, &config)?;
    let pre = mean_average_precision(&gbdt_model.predict_proba_batch(&holdout)?, holdout.require_labels()?, k)?.map;
    let real = mean_average_precision(&gbdt_model.predict_proba_batch(test)?, test.require_labels()?, k)?.map;
    Ok((pre, real))
}

/// Score every grid cell and rank by pretraining mAP, failed cells last.
pub fn grid_search_synth(
    train: &TabularDataset,
    test: &TabularDataset,
    k: usize,
    grid: &SynthGrid,
    base: &SynthConfig,
    protocol: &AugmentProtocol,
    seed: u64,
) -> Result<Vec<GridResult>> {
    if grid.n_cells() == 0 {
        return Err(Error::Empty("synthesizer grid"));
    }
    let mut epochs = grid.epochs.clone();
    epochs.sort_unstable();
    epochs.dedup();
    let pairs: Vec<(f64, f64)> = grid
        .gen_lr
        .iter()
        .flat_map(|&g| grid.disc_lr.iter().map(move |&d| (g, d)))
        .collect();
    let per_pair: Vec<Vec<GridResult>> = pairs
        .par_iter()
        .enumerate()
        .map(|(p, &(gen_lr, disc_lr))| {
            let config = SynthConfig {
                gen_lr,
                disc_lr,
                max_epochs: base.max_epochs.max(*epochs.last().unwrap()),
                seed: derive_seed(seed, p as u64),
                ..base.clone()
            };
            let fitted = synth::fit_with_snapshots(train, k, &config, &epochs);
            epochs
                .iter()
                .map(|&e| {
                    let outcome = fitted.as_ref().map_err(|err| err.to_string()).and_then(|f| {
                        let snap = f.checkpoint(e).expect("snapshot at every grid epoch");
                        score_snapshot(snap, test, protocol, k, derive_seed(seed, (1000 + p * epochs.len()) as u64 + e as u64))
                            .map_err(|err| err.to_string())
                    });
                    let (pretrain_map, real_map, status) = match outcome {
                        Ok((a, b)) => (Some(a), Some(b), TrialStatus::Ok),
                        Err(msg) => (None, None, TrialStatus::Failed(msg)),
                    };
                    GridResult {
                        gen_lr,
                        disc_lr,
                        epochs: e,
                        pretrain_map,
                        real_map,
                        status,
                    }
                })
                .collect()
        })
        .collect();
    let mut results: Vec<GridResult> = per_pair.into_iter().flatten().collect();
    results.sort_by(|a, b| match (a.pretrain_map, b.pretrain_map) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(results)
}

pub fn write_grid_results<W: Write>(writer: W, results: &[GridResult]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["rank", "gen_lr", "disc_lr", "epochs", "pretrain_map", "real_map", "status"])?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |m| m.to_string());
    for (i, r) in results.iter().enumerate() {
        wtr.write_record([
            (i + 1).to_string(),
            r.gen_lr.to_string(),
            r.disc_lr.to_string(),
            r.epochs.to_string(),
            opt(r.pretrain_map),
            opt(r.real_map),
            match &r.status {
                TrialStatus::Ok => "ok".into(),
                TrialStatus::Failed(msg) => format!("failed: {msg}"),
            },
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Synthesizer and search outcome of [`augment_and_search`].
#[derive(Debug, Clone)]
pub struct AugmentedSearch {
    pub synthesizer: synth::SynthesizerModel,
    pub synthetic: TabularDataset,
    pub search: SearchResult,
}

/// Fit a synthesizer on `train`, draw `protocol.n_samples` rows at
/// `protocol.class_ratios`, then [`random_search`] under-sampling counts and
/// tree shape on the synthetic pool, scored on the real `eval_set`.
/// `protocol.gbdt` supplies the non-searched tree settings.
#[allow(clippy::too_many_arguments)]
pub fn augment_and_search(
    train: &TabularDataset,
    eval_set: &TabularDataset,
    k: usize,
    synth_config: &SynthConfig,
    protocol: &AugmentProtocol,
    space: &SearchSpace,
    iterations: usize,
    seed: u64,
) -> Result<AugmentedSearch> {
    let fitted = synth::fit(train, k, synth_config)?;
    let synthetic = fitted
        .model
        .sample(protocol.n_samples, &protocol.class_ratios, derive_seed(seed, 0))?;
    let search = random_search(&synthetic, eval_set, space, iterations, &protocol.gbdt, derive_seed(seed, 1))?;
    Ok(AugmentedSearch {
        synthesizer: fitted.model,
        synthetic,
        search,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureSchema;
    use proptest::prelude::*;

    fn pool(counts: &[usize]) -> TabularDataset {
        let schema = FeatureSchema::all_numeric(["x", "y"]).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut r = rng(5);
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let x: f64 = r.random_range(0.0..1.0);
                rows.push(vec![(x * 0.5 + c as f64 * 0.25).min(1.0), r.random_range(0.0..1.0)]);
                labels.push(c);
            }
        }
        TabularDataset::new(schema, rows, Some(labels)).unwrap()
    }

    #[test]
    fn split_ten_per_class() {
        let labels: Vec<usize> = (0..30).map(|i| i / 10).collect();
        let p = stratified_split(&labels, 0.8, 1).unwrap();
        assert_eq!(p.train.len(), 24);
        assert_eq!(p.test.len(), 6);
        for c in 0..3 {
            assert_eq!(p.train.iter().filter(|&&i| labels[i] == c).count(), 8);
        }
        assert_eq!(p, stratified_split(&labels, 0.8, 1).unwrap());
        assert!(stratified_split(&[0, 0, 1], 0.8, 1).is_err());
    }

    #[test]
    fn undersample_reference_targets() {
        let data = pool(&[30_000, 10_000, 10_000]);
        let out = undersample(&data, &[23454, 6246, 7440], 3).unwrap();
        assert_eq!(out.n_rows(), 37_140);
        assert_eq!(out.class_counts(3), [23454, 6246, 7440]);
        assert_eq!(out, undersample(&data, &[23454, 6246, 7440], 3).unwrap());
    }

    #[test]
    fn undersample_identity_and_overflow() {
        let data = pool(&[20, 5, 7]);
        assert_eq!(undersample(&data, &[20, 5, 7], 0).unwrap(), data);
        match undersample(&data, &[20, 6, 7], 0) {
            Err(Error::InsufficientRows { class: 1, requested: 6, available: 5 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let big = pool(&[0, 10_000, 0]);
        assert!(undersample(&big, &[0, 10_001, 0], 0).is_err());
    }

    #[test]
    fn reference_optimum_in_space() {
        let space = SearchSpace::default();
        let opt = TrialParams {
            class_counts: vec![23454, 6246, 7440],
            num_leaves: 41,
            max_depth: 9,
            min_data_in_leaf: 51,
        };
        assert!(space.contains(&opt));
        let mut r = rng(0);
        for _ in 0..1000 {
            assert!(space.contains(&space.sample(&mut r)));
        }
    }

    fn small_space() -> SearchSpace {
        SearchSpace {
            class_counts: vec![IntRange::new(40, 80), IntRange::new(20, 40), IntRange::new(20, 40)],
            num_leaves: IntRange::new(4, 8),
            max_depth: IntRange::new(2, 4),
            min_data_in_leaf: IntRange::new(2, 5),
        }
    }

    fn fast_gbdt() -> TrainConfig {
        TrainConfig {
            num_trees: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn random_search_log_and_determinism() {
        let train = pool(&[100, 40, 40]);
        let eval = pool(&[30, 10, 10]);
        let a = random_search(&train, &eval, &small_space(), 6, &fast_gbdt(), 11).unwrap();
        let b = random_search(&train, &eval, &small_space(), 6, &fast_gbdt(), 11).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.trials.len(), 6);
        assert!(a.trials.iter().enumerate().all(|(i, t)| t.index == i));
        let best = a.best_trial().unwrap();
        for t in &a.trials {
            assert!(best.map_eval.unwrap() >= t.map_eval.unwrap());
        }
        let one = random_search(&train, &eval, &small_space(), 1, &fast_gbdt(), 2).unwrap();
        assert_eq!(one.best, Some(0));
    }

    #[test]
    fn random_search_records_failures() {
        let train = pool(&[100, 40, 40]);
        let eval = pool(&[30, 10, 10]);
        let mut space = small_space();
        space.class_counts[1] = IntRange::new(41, 50);
        let res = random_search(&train, &eval, &space, 3, &fast_gbdt(), 0).unwrap();
        assert!(res.best.is_none());
        assert!(res.trials.iter().all(|t| matches!(t.status, TrialStatus::Failed(_))));
        let mut buf = Vec::new();
        write_trials(&mut buf, &res.trials).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("trial,class0,class1,class2,num_leaves,max_depth,min_data_in_leaf,map_eval,status"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn grid_search_cardinality_and_ranking() {
        let data = pool(&[60, 30, 30]);
        let split = stratified_split(data.require_labels().unwrap(), 0.8, 0).unwrap();
        let (train, test) = (data.subset(&split.train), data.subset(&split.test));
        let grid = SynthGrid {
            gen_lr: vec![1e-3, 1e-4],
            disc_lr: vec![1e-3, 1e-4],
            epochs: vec![2, 4],
        };
        let base = SynthConfig {
            latent_dim: 4,
            hidden_dims: vec![8],
            batch_size: 32,
            max_epochs: 4,
            checkpoint_every: 2,
            ..SynthConfig::default()
        };
        let protocol = AugmentProtocol {
            n_samples: 300,
            gbdt: fast_gbdt(),
            ..AugmentProtocol::default()
        };
        let results = grid_search_synth(&train, &test, 3, &grid, &base, &protocol, 1).unwrap();
        assert_eq!(results.len(), 8);
        let scores: Vec<f64> = results.iter().filter_map(|r| r.pretrain_map).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(results, grid_search_synth(&train, &test, 3, &grid, &base, &protocol, 1).unwrap());
    }

    #[test]
    fn augment_then_search() {
        let data = pool(&[80, 30, 30]);
        let split = stratified_split(data.require_labels().unwrap(), 0.8, 0).unwrap();
        let (train, test) = (data.subset(&split.train), data.subset(&split.test));
        let synth_config = SynthConfig {
            latent_dim: 4,
            hidden_dims: vec![8],
            batch_size: 32,
            max_epochs: 4,
            checkpoint_every: 2,
            ..SynthConfig::default()
        };
        let protocol = AugmentProtocol {
            n_samples: 400,
            gbdt: fast_gbdt(),
            ..AugmentProtocol::default()
        };
        let run = || augment_and_search(&train, &test, 3, &synth_config, &protocol, &small_space(), 4, 9).unwrap();
        let out = run();
        assert_eq!(out.synthetic.class_counts(3), [240, 80, 80]);
        assert_eq!(out.search.trials.len(), 4);
        assert!(out.search.best_model.is_some());
        assert_eq!(out.search.trials, run().search.trials);
    }

    proptest! {
        #[test]
        fn split_partitions_rows(counts in prop::collection::vec(2usize..30, 1..4), seed in any::<u64>()) {
            let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
            let p = stratified_split(&labels, 0.8, seed).unwrap();
            let mut all: Vec<usize> = p.train.iter().chain(&p.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            for (c, &n) in counts.iter().enumerate() {
                let t = p.train.iter().filter(|&&i| labels[i] == c).count() as f64;
                prop_assert!((t - 0.8 * n as f64).abs() <= 1.0);
            }
        }

        #[test]
        fn undersample_hits_targets(a in 0usize..20, b in 0usize..10, seed in any::<u64>()) {
            let data = pool(&[20, 10]);
            let out = undersample(&data, &[a, b], seed).unwrap();
            prop_assert_eq!(out.class_counts(2), vec![a, b]);
        }
    }
}
