//! Config-driven pipeline commands.
//!
//! Every command reads one TOML [`PipelineConfig`], consumes the artifacts of
//! the stages before it from the output directory, and writes its own
//! artifacts plus a `<command>_manifest.json`.
//!
//! | command | reads | writes |
//! |---|---|---|
//! | `ingest` | claims CSV | `merged_claims.csv`, `normalized_claims.csv`, `grid_cells.csv` |
//! | `label` | `grid_cells.csv`, features CSV | `labels.csv`, `elbow.csv`, `labeled.csv`, `train.csv`, `test.csv` |
//! | `augment` | `train.csv`, `test.csv` | `synth_model.json`, `loss_log.csv`, `checkpoints/`, `synthetic.csv`, `synth_grid.csv` |
//! | `train` | `train.csv` or `synthetic.csv` | `gbdt_model.json` |
//! | `tune` | `synthetic.csv`, `test.csv` | `trials.csv`, `best_trial.json`, `tuned_model.json` |
//! | `evaluate` | model, `test.csv` | `report.txt`, `report.json`, `pr_curve_class{c}.csv` |
//! | `importance` | model | `importance.csv` |

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{self, FeatureDef, FeatureSchema, GridSpec, TabularDataset};
use crate::error::{Error, Result};
use crate::gbdt::{self, GbdtModel, TrainConfig};
use crate::labeling;
use crate::metrics::{EvaluationReport, PrCurve};
use crate::synth::{self, SynthConfig};
use crate::tuning::{self, AugmentProtocol, SearchSpace, SynthGrid, TrialParams};

#[derive(Debug, Parser)]
#[command(name = "stormdamage", version, about = "Grid-level flood damage classification pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Merge, normalize, and grid the claims.
    Ingest(CommonArgs),
    /// Label grid cells by k-means and split the labeled features.
    Label(CommonArgs),
    /// Fit the conditional GAN and sample synthetic rows.
    Augment(CommonArgs),
    /// Train a GBDT classifier.
    Train(CommonArgs),
    /// Random search over under-sampling and tree hyperparameters.
    Tune(CommonArgs),
    /// Score a model on the test rows.
    Evaluate(CommonArgs),
    /// Split-count feature importance.
    Importance(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Label(_) => "label",
            Command::Augment(_) => "augment",
            Command::Train(_) => "train",
            Command::Tune(_) => "tune",
            Command::Evaluate(_) => "evaluate",
            Command::Importance(_) => "importance",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Ingest(a)
            | Command::Label(a)
            | Command::Augment(a)
            | Command::Train(a)
            | Command::Tune(a)
            | Command::Evaluate(a)
            | Command::Importance(a) => a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    /// Claims CSV holding both sources (`claim_id,source,building_id,x,y,amount`).
    pub claims: PathBuf,
    /// Cell-keyed feature table (`cell_col,cell_row,<features>`).
    pub features: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelingConfig {
    pub k: usize,
    pub restarts: usize,
    /// Largest k on the elbow curve.
    pub elbow_max_k: usize,
    pub train_frac: f64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig {
            k: labeling::DEFAULT_K,
            restarts: labeling::DEFAULT_RESTARTS,
            elbow_max_k: 8,
            train_frac: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainData {
    #[default]
    Real,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainStage {
    pub data: TrainData,
    /// Under-sample to these per-class counts before training.
    pub class_counts: Option<Vec<usize>>,
}

impl Default for TrainStage {
    fn default() -> Self {
        TrainStage {
            data: TrainData::Real,
            class_counts: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    #[default]
    Trained,
    Tuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub iterations: usize,
    pub space: SearchSpace,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iterations: 50,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub grid: GridSpec,
    #[serde(default = "default_cap")]
    pub cap_percentile: f64,
    pub features: Vec<FeatureDef>,
    #[serde(default)]
    pub labeling: LabelingConfig,
    #[serde(default)]
    pub synth: SynthConfig,
    /// Synthetic sample size and class ratios, reused by the grid search.
    #[serde(default)]
    pub augment: AugmentProtocol,
    /// Optional learning-rate/epoch grid run by `augment`.
    #[serde(default)]
    pub synth_grid: Option<SynthGrid>,
    #[serde(default)]
    pub gbdt: TrainConfig,
    #[serde(default)]
    pub train: TrainStage,
    #[serde(default)]
    pub search: SearchConfig,
    /// Model scored by `evaluate` and `importance`.
    #[serde(default)]
    pub model: ModelChoice,
}

fn default_cap() -> f64 {
    dataset::DEFAULT_CAP_PERCENTILE
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.schema()?;
        self.synth.validate()?;
        self.gbdt.validate()?;
        self.search.space.validate()?;
        if self.search.space.class_counts.len() != self.labeling.k {
            return Err(Error::InvalidArgument(format!(
                "search space has {} class ranges for k = {}",
                self.search.space.class_counts.len(),
                self.labeling.k
            )));
        }
        if self.augment.class_ratios.len() != self.labeling.k {
            return Err(Error::InvalidArgument(format!(
                "augment has {} class ratios for k = {}",
                self.augment.class_ratios.len(),
                self.labeling.k
            )));
        }
        if !(self.cap_percentile > 0.0 && self.cap_percentile <= 1.0) {
            return Err(Error::InvalidArgument(format!("cap_percentile {} outside (0, 1]", self.cap_percentile)));
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        FeatureSchema::new(self.features.clone())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.paths.output_dir.join(name)
    }
}

/// Loaded config plus what the manifest needs.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: PipelineConfig,
    pub config_sha256: String,
    pub seed: u64,
}

impl RunContext {
    pub fn load(args: &CommonArgs) -> Result<Self> {
        let bytes = read_input(&args.config)?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| Error::InvalidArgument(format!("{} is not UTF-8", args.config.display())))?;
        let mut config = PipelineConfig::from_toml(&text)?;
        // Relative paths resolve against the config file's directory.
        let base = args.config.parent().unwrap_or(Path::new("")).to_path_buf();
        for p in [&mut config.paths.claims, &mut config.paths.features, &mut config.paths.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        let seed = args.seed.unwrap_or(config.seed);
        Ok(RunContext {
            config,
            config_sha256: hex(&Sha256::digest(&bytes)),
            seed,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub artifacts: Vec<String>,
    pub wall_time_secs: f64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Collects written artifact names for the manifest.
struct Outputs<'a> {
    config: &'a PipelineConfig,
    written: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(config: &'a PipelineConfig) -> Self {
        Outputs { config, written: Vec::new() }
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.written.push(name.to_string());
        create(&self.config.out(name))
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        self.written.push(name.to_string());
        let path = self.config.out(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        Ok(path)
    }
}

fn read_labeled_artifact(config: &PipelineConfig, name: &str) -> Result<TabularDataset> {
    let path = config.out(name);
    let bytes = read_input(&path)?;
    dataset::read_labeled(bytes.as_slice(), &path.display().to_string(), &config.schema()?)
}

fn load_model(config: &PipelineConfig) -> Result<GbdtModel> {
    let name = match config.model {
        ModelChoice::Trained => "gbdt_model.json",
        ModelChoice::Tuned => "tuned_model.json",
    };
    GbdtModel::load(&config.out(name))
}

/// Run one command and write its manifest. Returns the manifest.
pub fn run(command: &Command) -> Result<Manifest> {
    let started = Instant::now();
    let ctx = RunContext::load(command.args())?;
    fs::create_dir_all(&ctx.config.paths.output_dir)?;
    let mut out = Outputs::new(&ctx.config);
    match command {
        Command::Ingest(_) => ingest(&ctx, &mut out)?,
        Command::Label(_) => label(&ctx, &mut out)?,
        Command::Augment(_) => augment(&ctx, &mut out)?,
        Command::Train(_) => train(&ctx, &mut out)?,
        Command::Tune(_) => tune(&ctx, &mut out)?,
        Command::Evaluate(_) => evaluate(&ctx, &mut out)?,
        Command::Importance(_) => importance(&ctx, &mut out)?,
    }
    let manifest = Manifest {
        command: command.name().to_string(),
        config_sha256: ctx.config_sha256.clone(),
        seed: ctx.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        artifacts: out.written,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let mut w = create(&ctx.config.out(&format!("{}_manifest.json", command.name())))?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.flush()?;
    Ok(manifest)
}

fn ingest(ctx: &RunContext, out: &mut Outputs) -> Result<()> {
    let config = &ctx.config;
    let bytes = read_input(&config.paths.claims)?;
    let claims = dataset::read_claims(bytes.as_slice(), &config.paths.claims.display().to_string())?;
    let outside: Vec<String> = claims
        .iter()
        .filter(|c| config.grid.cell_of(c.x, c.y).is_err())
        .map(|c| format!("{} ({}, {})", c.claim_id, c.x, c.y))
        .collect();
    if !outside.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} claim(s) outside the grid extent: {}",
            outside.len(),
            outside.join("; ")
        )));
    }
    let n_read = claims.len();
    let (nfip, ia) = dataset::split_by_source(claims);
    let merged = dataset::merge_claims(&nfip, &ia)?;
    let normalized = dataset::normalize_claims(&merged, config.cap_percentile)?;
    let points: Vec<((f64, f64), f64)> = normalized.iter().map(|c| ((c.x, c.y), c.normalized)).collect();
    let cells = dataset::aggregate_to_grid(&points, &config.grid)?;

    dataset::write_claims(out.file("merged_claims.csv")?, &merged)?;
    dataset::write_normalized_claims(out.file("normalized_claims.csv")?, &normalized)?;
    dataset::write_grid_cells(out.file("grid_cells.csv")?, &cells)?;
    let occupied = cells.iter().filter(|c| c.claim_count > 0).count();
    println!(
        "ingest: {n_read} claims read, {} after merge, {} cells ({occupied} with claims)",
        merged.len(),
        cells.len()
    );
    Ok(())
}

fn label(ctx: &RunContext, out: &mut Outputs) -> Result<()> {
    let config = &ctx.config;
    let path = config.out("grid_cells.csv");
    let bytes = read_input(&path)?;
    let cells = dataset::read_grid_cells(bytes.as_slice(), &path.display().to_string())?;
    let (labels, fit) = labeling::label_cells_with(&cells, config.labeling.k, config.labeling.restarts, ctx.seed)?;

    let sums: Vec<f64> = cells.iter().map(|c| c.claim_sum).collect();
    let mut sorted = sums.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let max_k = config.labeling.elbow_max_k.min(sorted.len()).max(1);
    let curve = labeling::elbow_curve(&sums, 1..=max_k, config.labeling.restarts, ctx.seed)?;

    let bytes = read_input(&config.paths.features)?;
    let (feature_cells, features) =
        dataset::read_features(bytes.as_slice(), &config.paths.features.display().to_string(), &config.schema()?)?;
    let by_cell = labels.iter().copied().collect();
    let labeled = dataset::join_labels(&feature_cells, &features, &by_cell)?;
    let split = tuning::stratified_split(labeled.require_labels()?, config.labeling.train_frac, ctx.seed)?;

    labeling::write_labels(out.file("labels.csv")?, &cells, &labels)?;
    labeling::write_elbow(out.file("elbow.csv")?, &curve)?;
    dataset::write_labeled(out.file("labeled.csv")?, &labeled)?;
    dataset::write_labeled(out.file("train.csv")?, &labeled.subset(&split.train))?;
    dataset::write_labeled(out.file("test.csv")?, &labeled.subset(&split.test))?;
    println!(
        "label: k = {}, centroids {:?}, class counts {:?}, {} train / {} test rows",
        fit.k,
        fit.centroids,
        labeled.class_counts(config.labeling.k),
        split.train.len(),
        split.test.len()
    );
    Ok(())
}

fn augment(ctx: &RunContext, out: &mut Outputs) -> Result<()> {
    let config = &ctx.config;
    let k = config.labeling.k;
    let train = read_labeled_artifact(config, "train.csv")?;
    let synth_config = SynthConfig {
        seed: ctx.seed,
        ..config.synth.clone()
    };
    let fitted = synth::fit(&train, k, &synth_config)?;
    fitted.model.save(&out.path("synth_model.json")?)?;
    fitted.model.log.write_csv(out.file("loss_log.csv")?)?;
    for cp in &fitted.checkpoints {
        let name = format!("checkpoints/{}", synth::checkpoint_file_name(cp.epoch));
        cp.model.save(&out.path(&name)?)?;
    }
    let synthetic = fitted
        .model
        .sample(config.augment.n_samples, &config.augment.class_ratios, ctx.seed)?;
    dataset::write_labeled(out.file("synthetic.csv")?, &synthetic)?;
    println!(
        "augment: {} epochs, {} synthetic rows, class counts {:?}",
        fitted.model.log.epochs(),
        synthetic.n_rows(),
        synthetic.class_counts(k)
    );
    if let Some(grid) = &config.synth_grid {
        let test = read_labeled_artifact(config, "test.csv")?;
        let results = tuning::grid_search_synth(&train, &test, k, grid, &synth_config, &config.augment, ctx.seed)?;
        tuning::write_grid_results(out.file("synth_grid.csv")?, &results)?;
        println!("augment: {} grid cells scored", results.len());
    }
    Ok(())
}

fn train(ctx: &RunContext, out: &mut Outputs) -> Result<()> {
    let config = &ctx.config;
    let k = config.labeling.k;
    let data = match config.train.data {
        TrainData::Real => read_labeled_artifact(config, "train.csv")?,
        TrainData::Synthetic => read_labeled_artifact(config, "synthetic.csv")?,
    };
    let data = match &config.train.class_counts {
        Some(targets) => tuning::undersample(&data, targets, ctx.seed)?,
        None => data,
    };
    let gbdt_config = TrainConfig {
        seed: ctx.seed,
        ..config.gbdt.clone()
    };
    let model = gbdt::train(&data, data.require_labels()?, k, &gbdt_config)?;
    model.save(&out.path("gbdt_model.json")?)?;
    println!("train: {} rows, class counts {:?}", data.n_rows(), data.class_counts(k));
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BestTrial {
    index: usize,
    params: TrialParams,
    seed: u64,
    map_eval: f64,
}

fn tune(ctx: &RunContext, out: &mut Outputs) -> Result<()> {
    let config = &ctx.config;
    let pool = read_labeled_artifact(config, "synthetic.csv")?;
    let test = read_labeled_artifact(config, "test.csv")?;
    let result = tuning::random_search(&pool, &test, &config.search.space, config.search.iterations, &config.gbdt, ctx.seed)?;
    tuning::write_trials(out.file("trials.csv")?, &result.trials)?;
    let (Some(best), Some(model)) = (result.best_trial(), &result.best_model) else {
        return Err(Error::InvalidArgument("every search trial failed; see trials.csv".into()));
    };
    let summary = BestTrial {
        index: best.index,
        params: best.params.clone(),
        seed: best.seed,
        map_eval: best.map_eval.expect("best trial has a score"),
    };
    let mut w = out.file("best_trial.json")?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.flush()?;
    model.save(&out.path("tuned_model.json")?)?;
    println!(
        "tune: {} trials, best #{} mAP {:.4} with {:?}",
        result.trials.len(),
        summary.index,
        summary.map_eval,
        summary.params
    );
    Ok(())
}

fn evaluate(ctx: &RunContext, out: &mut Outputs) -> Result<()> {
    let config = &ctx.config;
    let k = config.labeling.k;
    let model = load_model(config)?;
    let test = read_labeled_artifact(config, "test.csv")?;
    let labels = test.require_labels()?;
    let probs = model.predict_proba_batch(&test)?;
    let report = EvaluationReport::new(&probs, labels, k)?;
    let text = report.to_text();
    out.file("report.txt")?.write_all(text.as_bytes())?;
    let mut w = out.file("report.json")?;
    serde_json::to_writer_pretty(&mut w, &report)?;
    w.flush()?;
    for c in 0..k {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let positives: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        let curve = PrCurve::from_scores(&scores, &positives)?;
        curve.write_csv(out.file(&format!("pr_curve_class{c}.csv"))?)?;
    }
    print!("{text}");
    Ok(())
}

/// `(feature, split count)` sorted by count descending, ties in schema order.
pub fn importance_table(model: &GbdtModel, schema: &FeatureSchema) -> Result<Vec<(String, usize)>> {
    let counts = gbdt::split_importance(model);
    if counts.len() != schema.len() {
        return Err(Error::LengthMismatch {
            left: counts.len(),
            right: schema.len(),
        });
    }
    let mut table: Vec<(String, usize)> = schema.names().map(String::from).zip(counts).collect();
    table.sort_by(|a, b| b.1.cmp(&a.1));
    Ok(table)
}

fn importance(ctx: &RunContext, out: &mut Outputs) -> Result<()> {
    let config = &ctx.config;
    let model = load_model(config)?;
    let table = importance_table(&model, &config.schema()?)?;
    let mut wtr = csv::Writer::from_writer(out.file("importance.csv")?);
    wtr.write_record(["feature", "split_count"])?;
    for (name, count) in &table {
        wtr.write_record([name.clone(), count.to_string()])?;
    }
    wtr.flush()?;
    if let Some((name, count)) = table.first() {
        println!("importance: top feature {name} ({count} splits)");
    }
    Ok(())
}
