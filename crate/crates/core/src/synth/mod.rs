//! Class-conditional tabular GAN.
//!
//! A plain conditional GAN: the class one-hot is concatenated to the
//! generator's latent input and to the discriminator's row input. Numeric
//! features leave the generator through a logistic, categorical features
//! through a Gumbel-softmax during training and a Gumbel-argmax when
//! sampling. The label of a generated row is its conditioning class.
//!
//! Batches are built by training-by-sampling: a condition class is drawn
//! uniformly for every row, then a real row of that class.

pub mod adam;
pub mod gan;
pub mod network;

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureSchema, TabularDataset};
use crate::error::{Error, Result};
use crate::gbdt::model::{check_header, ModelFile};
use crate::rng::{rng_for, Rng};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gan::{encode, generator_forward, ColumnLayout, GradientCheck};
pub use network::{Activation, NetworkParams};

pub const MA_WINDOW: usize = 50;
pub const SYNTH_FORMAT: &str = "stormdamage-synth";
pub const SYNTH_VERSION: u32 = 1;
const SAMPLE_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub latent_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub checkpoint_every: usize,
    pub gumbel_tau: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            latent_dim: 64,
            hidden_dims: vec![128, 128],
            gen_lr: 1e-4,
            disc_lr: 1e-4,
            batch_size: 500,
            max_epochs: 1000,
            checkpoint_every: 50,
            gumbel_tau: 0.2,
            adam_beta1: 0.5,
            adam_beta2: 0.9,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.gen_lr > 0.0 && self.disc_lr > 0.0 && self.gen_lr.is_finite() && self.disc_lr.is_finite()) {
            return fail(format!("learning rates must be positive, got {} / {}", self.gen_lr, self.disc_lr));
        }
        if self.checkpoint_every < 1 || self.max_epochs < self.checkpoint_every {
            return fail(format!(
                "need max_epochs >= checkpoint_every >= 1, got {} and {}",
                self.max_epochs, self.checkpoint_every
            ));
        }
        if self.batch_size < 1 || self.latent_dim < 1 {
            return fail("batch_size and latent_dim must be at least 1".into());
        }
        if self.hidden_dims.contains(&0) {
            return fail("hidden layer widths must be at least 1".into());
        }
        if !(self.gumbel_tau > 0.0) {
            return fail(format!("gumbel_tau must be positive, got {}", self.gumbel_tau));
        }
        if !((0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2) && self.adam_eps > 0.0) {
            return fail("Adam betas must lie in [0, 1) and eps be positive".into());
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub gen_loss: Vec<f64>,
    pub disc_loss: Vec<f64>,
}

/// Trailing mean over `window` entries; `None` before `window` entries exist.
pub fn moving_average(series: &[f64], window: usize) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, &v) in series.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= series[i - window];
        }
        out.push((i + 1 >= window).then(|| sum / window as f64));
    }
    out
}

impl TrainingLog {
    pub fn epochs(&self) -> usize {
        self.gen_loss.len()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let gen_ma = moving_average(&self.gen_loss, MA_WINDOW);
        let disc_ma = moving_average(&self.disc_loss, MA_WINDOW);
        let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["epoch", "gen_loss", "disc_loss", "gen_loss_ma50", "disc_loss_ma50"])?;
        for e in 0..self.epochs() {
            wtr.write_record([
                (e + 1).to_string(),
                self.gen_loss[e].to_string(),
                self.disc_loss[e].to_string(),
                fmt(gen_ma[e]),
                fmt(disc_ma[e]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizerModel {
    pub schema: FeatureSchema,
    pub n_classes: usize,
    pub layout: ColumnLayout,
    pub config: SynthConfig,
    pub generator: NetworkParams,
    pub discriminator: NetworkParams,
    pub log: TrainingLog,
}

/// A model snapshot taken at the end of `epoch`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub model: SynthesizerModel,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: SynthesizerModel,
    pub checkpoints: Vec<Checkpoint>,
}

impl FitResult {
    pub fn checkpoint(&self, epoch: usize) -> Option<&SynthesizerModel> {
        self.checkpoints.iter().find(|c| c.epoch == epoch).map(|c| &c.model)
    }
}

/// Train on a labeled table; snapshots every `checkpoint_every` epochs.
pub fn fit(data: &TabularDataset, k: usize, config: &SynthConfig) -> Result<FitResult> {
    let epochs: Vec<usize> = (1..=config.max_epochs / config.checkpoint_every.max(1))
        .map(|i| i * config.checkpoint_every)
        .collect();
    fit_with_snapshots(data, k, config, &epochs)
}

/// As [`fit`], but snapshots exactly at `snapshot_epochs` and trains up to
/// the largest of them (or `max_epochs` if none is given).
pub fn fit_with_snapshots(
    data: &TabularDataset,
    k: usize,
    config: &SynthConfig,
    snapshot_epochs: &[usize],
) -> Result<FitResult> {
    config.validate()?;
    let labels = data.require_labels()?;
    if data.is_empty() {
        return Err(Error::Empty("synthesizer training data"));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidArgument(format!("label {y} outside 0..{k}")));
        }
        by_class[y].push(i);
    }
    let missing: Vec<usize> = (0..k).filter(|&c| by_class[c].is_empty()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let (encoded, layout) = encode(data)?;
    let width = layout.width();
    let last_epoch = snapshot_epochs.iter().copied().max().unwrap_or(config.max_epochs);

    let mut init_rng = rng_for(config.seed, 0);
    let mut rng = rng_for(config.seed, 1);
    let mut model = SynthesizerModel {
        schema: data.schema().clone(),
        n_classes: k,
        layout: layout.clone(),
        config: config.clone(),
        generator: NetworkParams::init(config.latent_dim + k, &config.hidden_dims, width, Activation::Relu, &mut init_rng),
        discriminator: NetworkParams::init(width + k, &config.hidden_dims, 1, Activation::LeakyRelu, &mut init_rng),
        log: TrainingLog::default(),
    };
    let mut g_state = AdamState::new(&model.generator);
    let mut d_state = AdamState::new(&model.discriminator);
    let (g_adam, d_adam) = (config.adam(config.gen_lr), config.adam(config.disc_lr));
    let b = config.batch_size;
    let steps = (data.n_rows() / b).max(1);
    let tau = config.gumbel_tau;
    let mut checkpoints = Vec::new();

    for epoch in 1..=last_epoch {
        let (mut g_sum, mut d_sum) = (0.0, 0.0);
        for _ in 0..steps {
            let classes: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
            let mut real = Array2::zeros((b, width));
            for (i, &c) in classes.iter().enumerate() {
                let row = by_class[c][rng.random_range(0..by_class[c].len())];
                real.row_mut(i).assign(&encoded.row(row));
            }
            let cond = gan::one_hot(&classes, k);

            let z = gan::normal_matrix(b, config.latent_dim, &mut rng);
            let noise = gan::gumbel_noise(&layout, b, &mut rng);
            let fake = generator_forward(&model.generator, &layout, &z, &cond, Some(&noise), tau);
            let (d_loss, d_grads) = gan::discriminator_step(&model.discriminator, &real, &fake, &cond);
            adam_step(&mut model.discriminator, &d_grads, &mut d_state, &d_adam, "discriminator")?;

            let z = gan::normal_matrix(b, config.latent_dim, &mut rng);
            let noise = gan::gumbel_noise(&layout, b, &mut rng);
            let (g_loss, g_grads) =
                gan::generator_step(&model.generator, &model.discriminator, &layout, &z, &cond, &noise, tau);
            adam_step(&mut model.generator, &g_grads, &mut g_state, &g_adam, "generator")?;

            d_sum += d_loss;
            g_sum += g_loss;
        }
        let (g_mean, d_mean) = (g_sum / steps as f64, d_sum / steps as f64);
        model.log.gen_loss.push(g_mean);
        model.log.disc_loss.push(d_mean);
        if !(g_mean.is_finite() && d_mean.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                log: Box::new(model.log),
            });
        }
        if snapshot_epochs.contains(&epoch) {
            checkpoints.push(Checkpoint {
                epoch,
                model: model.clone(),
            });
        }
    }
    Ok(FitResult { model, checkpoints })
}

/// Split `n` by `ratios`: floors first, then one extra row to each of the
/// largest fractional remainders (ties to the lower class) until the total
/// is `n`.
pub fn allocate_counts(n: usize, ratios: &[f64]) -> Result<Vec<usize>> {
    if ratios.is_empty() {
        return Err(Error::Empty("class ratios"));
    }
    if let Some(r) = ratios.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
        return Err(Error::InvalidArgument(format!("ratio {r} must be finite and non-negative")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("ratios sum to {total}, not 1")));
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    Ok(counts)
}

impl SynthesizerModel {
    /// `n` labeled rows with per-class counts from [`allocate_counts`], in
    /// class order.
    pub fn sample(&self, n: usize, ratios: &[f64], seed: u64) -> Result<TabularDataset> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        if ratios.len() != self.n_classes {
            return Err(Error::LengthMismatch {
                left: ratios.len(),
                right: self.n_classes,
            });
        }
        let counts = allocate_counts(n, ratios)?;
        let mut rng = rng_for(seed, 2);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for (class, &count) in counts.iter().enumerate() {
            let mut left = count;
            while left > 0 {
                let m = left.min(SAMPLE_CHUNK);
                rows.extend(self.generate(class, m, &mut rng));
                labels.extend(std::iter::repeat_n(class, m));
                left -= m;
            }
        }
        TabularDataset::new(self.schema.clone(), rows, Some(labels))
    }

    fn generate(&self, class: usize, m: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        let z = gan::normal_matrix(m, self.config.latent_dim, rng);
        let noise = gan::gumbel_noise(&self.layout, m, rng);
        let cond = gan::one_hot(&vec![class; m], self.n_classes);
        let raw = self.generator.forward(&ndarray::concatenate![Axis(1), z, cond]);
        // Gumbel-argmax draws each categorical level with its softmax
        // probability; the argmax of the block decodes it.
        let mut out = raw + &noise;
        for j in (0..self.layout.n_features()).filter(|&j| !self.layout.categorical[j]) {
            let col = self.layout.starts[j];
            out.slice_mut(s![.., col])
                .mapv_inplace(|v| gan::sigmoid(v).clamp(gan::PROB_CLAMP, 1.0 - gan::PROB_CLAMP));
        }
        self.layout.decode(out.view())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            format: SYNTH_FORMAT.to_string(),
            version: SYNTH_VERSION,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        check_header(text, SYNTH_FORMAT, SYNTH_VERSION)?;
        let file: ModelFile<SynthesizerModel> = serde_json::from_str(text)?;
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

/// Checkpoint file name for `epoch`.
pub fn checkpoint_file_name(epoch: usize) -> String {
    format!("synth_epoch_{epoch:04}.json")
}

/// Fresh networks from `config` checked against finite differences on the
/// first `min(batch_size, 16)` rows of `data`.
pub fn gradient_check(config: &SynthConfig, data: &TabularDataset, k: usize) -> Result<GradientCheck> {
    config.validate()?;
    let labels = data.require_labels()?;
    let (encoded, layout) = encode(data)?;
    let b = config.batch_size.min(16).min(data.n_rows());
    if b == 0 {
        return Err(Error::Empty("gradient check data"));
    }
    let mut rng = rng_for(config.seed, 3);
    let gen = NetworkParams::init(config.latent_dim + k, &config.hidden_dims, layout.width(), Activation::Relu, &mut rng);
    let disc = NetworkParams::init(layout.width() + k, &config.hidden_dims, 1, Activation::LeakyRelu, &mut rng);
    let real = encoded.slice(s![..b, ..]).to_owned();
    Ok(gan::gradient_check(&gen, &disc, &layout, &real, &labels[..b], k, config.gumbel_tau, &mut rng))
}
