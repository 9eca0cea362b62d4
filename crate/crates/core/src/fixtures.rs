//! Deterministic synthetic stand-ins for claim records and cell feature
//! tables.

use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use std::path::{Path, PathBuf};

use crate::dataset::{aggregate_to_grid, merge_claims, normalize_claims, CellId, ClaimRecord, ClaimSource, FeatureDef, FeatureSchema, GridCell, GridSpec, TabularDataset};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::synth::allocate_counts;

/// Likelihood-ratio divisor of the planted signal: under the raw class
/// prior, a signal row of class `c` is at most `1 / (1 + SIGNAL_DILUTION)`
/// likely to belong to `c`.
pub const SIGNAL_DILUTION: f64 = 4.0;
/// A signal row's `signal` value has density `SIGNAL_POWER * v^(SIGNAL_POWER - 1)`.
pub const SIGNAL_POWER: f64 = 3.0;
/// Share of claims placed inside hotspot cells.
pub const HOTSPOT_SHARE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub n_rows: usize,
    pub prevalences: Vec<f64>,
    /// Probability in `[0, 1]` that a minority-class row carries its signal;
    /// larger values are clamped to 1.
    pub signal_strength: f64,
    pub noise_features: usize,
    pub seed: u64,
}

impl FixtureSpec {
    /// Shaped like the damage-class mix of the flood study: 96.4% / 0.8% /
    /// 2.8%.
    pub fn imbalanced(n_rows: usize, signal_strength: f64, seed: u64) -> Self {
        FixtureSpec {
            n_rows,
            prevalences: vec![0.964, 0.008, 0.028],
            signal_strength,
            noise_features: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prevalences.len() < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if !(self.signal_strength >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "signal strength {} must be non-negative",
                self.signal_strength
            )));
        }
        allocate_counts(self.n_rows, &self.prevalences).map(|_| ())
    }
}

/// Names of the planted-signal columns: `signal` is shared by every
/// minority class, `class{c}_signal` belongs to class `c`.
pub fn signal_feature_names(k: usize, noise: usize) -> Vec<String> {
    let mut names = vec!["signal".to_string()];
    names.extend((1..k).map(|c| format!("class{c}_signal")));
    names.extend((0..noise).map(|j| format!("noise{j}")));
    names
}

/// Lower edge of class `c`'s interval `[lo, 1]` on `class{c}_signal`, sized
/// so that the peak class-`c` density at `signal = 1` is `1 / SIGNAL_DILUTION`
/// of the class-0 density there.
pub fn signal_region(prevalences: &[f64], c: usize) -> f64 {
    let width = (SIGNAL_POWER * SIGNAL_DILUTION * prevalences[c] / prevalences[0]).min(1.0);
    1.0 - width
}

/// Numeric table in `[0, 1]` with exact class counts (largest remainder,
/// rows in class order). Every feature is uniform on `[0, 1]` except that,
/// with probability `signal_strength`, a row of class `c >= 1` has `signal`
/// skewed toward 1 and `class{c}_signal` drawn from its [`signal_region`]. The
/// signal is learnable but never outweighs the majority prior.
pub fn make_imbalanced_tabular(spec: &FixtureSpec) -> Result<TabularDataset> {
    spec.validate()?;
    let k = spec.prevalences.len();
    let counts = allocate_counts(spec.n_rows, &spec.prevalences)?;
    let names = signal_feature_names(k, spec.noise_features);
    let strength = spec.signal_strength.min(1.0);
    let mut rng = rng_for(spec.seed, 0);
    let mut rows = Vec::with_capacity(spec.n_rows);
    let mut labels = Vec::with_capacity(spec.n_rows);
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let mut row: Vec<f64> = (0..names.len()).map(|_| rng.random::<f64>()).collect();
            // Drawn for every row so the base values do not depend on strength.
            let u: f64 = rng.random();
            if c > 0 && u < strength {
                let lo = signal_region(&spec.prevalences, c);
                row[0] = row[0].powf(1.0 / SIGNAL_POWER);
                row[c] = lo + (1.0 - lo) * row[c];
            }
            rows.push(row);
            labels.push(c);
        }
    }
    TabularDataset::new(FeatureSchema::all_numeric(names)?, rows, Some(labels))
}

/// Class-conditional Gaussian mixture clipped to `[0, 1]`: `n_numeric`
/// numeric features with per-class means in `[0.2, 0.8]` and standard
/// deviation 0.08, plus one three-level categorical `zone` whose level
/// distribution depends on the class.
pub fn make_gaussian_mixture(n_rows: usize, prevalences: &[f64], n_numeric: usize, seed: u64) -> Result<TabularDataset> {
    let k = prevalences.len();
    let counts = allocate_counts(n_rows, prevalences)?;
    let mut rng = rng_for(seed, 1);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n_numeric).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let zone_probs: Vec<[f64; 3]> = (0..k)
        .map(|c| match c % 3 {
            0 => [0.7, 0.2, 0.1],
            1 => [0.2, 0.6, 0.2],
            _ => [0.1, 0.3, 0.6],
        })
        .collect();
    let noise = Normal::new(0.0, 0.08).expect("valid deviation");
    let mut rows = Vec::with_capacity(n_rows);
    let mut labels = Vec::with_capacity(n_rows);
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let mut row: Vec<f64> = means[c].iter().map(|m| (m + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect();
            let u: f64 = rng.random();
            let zone = if u < zone_probs[c][0] {
                0
            } else if u < zone_probs[c][0] + zone_probs[c][1] {
                1
            } else {
                2
            };
            row.push(zone as f64);
            rows.push(row);
            labels.push(c);
        }
    }
    let mut features: Vec<FeatureDef> = (0..n_numeric).map(|j| FeatureDef::numeric(format!("x{j}"))).collect();
    features.push(FeatureDef::categorical("zone", ["a", "b", "c"]));
    TabularDataset::new(FeatureSchema::new(features)?, rows, Some(labels))
}

/// NFIP and IA claims over `grid`. `round(0.95 n)` claims fall uniformly in
/// the hotspot cells, the rest anywhere in the extent. About a third of IA
/// claims sit on a building that also has an NFIP claim.
pub fn make_claim_fixture(
    grid: &GridSpec,
    hotspots: &[CellId],
    n_claims: usize,
    seed: u64,
) -> Result<(Vec<ClaimRecord>, Vec<ClaimRecord>)> {
    grid.validate()?;
    if let Some(&(c, r)) = hotspots.iter().find(|&&(c, r)| c >= grid.n_cols || r >= grid.n_rows) {
        return Err(Error::InvalidArgument(format!("hotspot ({c}, {r}) outside the grid")));
    }
    let mut rng = rng_for(seed, 2);
    let amount = LogNormal::<f64>::new(9.0, 1.0).expect("valid parameters");
    let in_hotspots = if hotspots.is_empty() {
        0
    } else {
        (HOTSPOT_SHARE * n_claims as f64).round() as usize
    };
    let (mut nfip, mut ia) = (Vec::new(), Vec::new());
    for i in 0..n_claims {
        let (col, row) = if i < in_hotspots {
            (hotspots[i % hotspots.len()].0 as f64, hotspots[i % hotspots.len()].1 as f64)
        } else {
            (
                rng.random_range(0..grid.n_cols) as f64,
                rng.random_range(0..grid.n_rows) as f64,
            )
        };
        let mut x = grid.origin_x + (col + rng.random::<f64>()) * grid.cell_size;
        let mut y = grid.origin_y + (row + rng.random::<f64>()) * grid.cell_size;
        let value: f64 = amount.sample(&mut rng).round().max(1.0);
        let to_ia = i % 2 == 1;
        let mut building = format!("B{i:06}");
        if to_ia && !nfip.is_empty() && (ia.is_empty() || rng.random::<f64>() < 1.0 / 3.0) {
            let shared: &ClaimRecord = &nfip[rng.random_range(0..nfip.len())];
            building = shared.building_id.clone();
            x = shared.x;
            y = shared.y;
        }
        let record = ClaimRecord {
            claim_id: format!("{}{i:06}", if to_ia { "I" } else { "N" }),
            source: if to_ia { ClaimSource::Ia } else { ClaimSource::Nfip },
            building_id: building,
            x,
            y,
            amount: value,
        };
        if to_ia {
            ia.push(record);
        } else {
            nfip.push(record);
        }
    }
    Ok((nfip, ia))
}

/// Cell features loosely driven by each cell's claim sum: `depth` rises and
/// `distance` falls with damage, `elevation` and `rainfall` are noise, and
/// `land_use` is a three-level categorical. Values lie in `[0, 1]`.
pub fn make_cell_features(cells: &[GridCell], seed: u64) -> Result<(Vec<CellId>, TabularDataset)> {
    let max = cells.iter().map(|c| c.claim_sum).fold(0.0, f64::max);
    let mut rng = rng_for(seed, 3);
    let jitter = Normal::new(0.0, 0.05).expect("valid deviation");
    let rows = cells
        .iter()
        .map(|c| {
            let s = if max > 0.0 { (c.claim_sum / max).sqrt() } else { 0.0 };
            let depth = (0.1 + 0.8 * s + jitter.sample(&mut rng)).clamp(0.0, 1.0);
            let distance = (0.9 - 0.7 * s + jitter.sample(&mut rng)).clamp(0.0, 1.0);
            let land_use = if s > 0.3 { rng.random_range(0..2) } else { rng.random_range(0..3) };
            vec![depth, distance, rng.random(), rng.random(), land_use as f64]
        })
        .collect();
    let schema = FeatureSchema::new(vec![
        FeatureDef::numeric("depth"),
        FeatureDef::numeric("distance"),
        FeatureDef::numeric("elevation"),
        FeatureDef::numeric("rainfall"),
        FeatureDef::categorical("land_use", ["residential", "commercial", "open"]),
    ])?;
    Ok((cells.iter().map(GridCell::id).collect(), TabularDataset::new(schema, rows, None)?))
}

/// Grid side of the demo inputs.
pub const DEMO_GRID_SIDE: usize = 30;

/// Write a small end-to-end input set into `dir`: `claims.csv` (both
/// sources), `features.csv` keyed by cell, and `pipeline.toml` with settings
/// that run every command in seconds. Returns the config path.
pub fn write_demo_inputs(dir: &Path, seed: u64) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let grid = GridSpec::new(0.0, 0.0, crate::dataset::DEFAULT_CELL_SIZE, DEMO_GRID_SIDE, DEMO_GRID_SIDE)?;
    let hotspots: Vec<CellId> = (0..40).map(|i| ((7 * i + 3) % DEMO_GRID_SIDE, (11 * i + 5) % DEMO_GRID_SIDE)).collect();
    let (nfip, ia) = make_claim_fixture(&grid, &hotspots, 3000, seed)?;
    let all: Vec<ClaimRecord> = nfip.iter().chain(&ia).cloned().collect();
    crate::dataset::write_claims(std::fs::File::create(dir.join("claims.csv"))?, &all)?;

    let merged = merge_claims(&nfip, &ia)?;
    let normalized = normalize_claims(&merged, crate::dataset::DEFAULT_CAP_PERCENTILE)?;
    let points: Vec<((f64, f64), f64)> = normalized.iter().map(|c| ((c.x, c.y), c.normalized)).collect();
    let cells = aggregate_to_grid(&points, &grid)?;
    let (ids, features) = make_cell_features(&cells, seed)?;
    crate::dataset::write_features(std::fs::File::create(dir.join("features.csv"))?, &ids, &features)?;

    let config = format!(
        r#"seed = {seed}
features = [
  {{ name = "depth", kind = "numeric" }},
  {{ name = "distance", kind = "numeric" }},
  {{ name = "elevation", kind = "numeric" }},
  {{ name = "rainfall", kind = "numeric" }},
  {{ name = "land_use", kind = "categorical", levels = ["residential", "commercial", "open"] }},
]

[paths]
claims = "claims.csv"
features = "features.csv"
output_dir = "out"

[grid]
origin_x = 0.0
origin_y = 0.0
cell_size = {cell}
n_cols = {side}
n_rows = {side}

[labeling]
k = 3

[synth]
hidden_dims = [32, 32]
latent_dim = 16
batch_size = 100
max_epochs = 60
checkpoint_every = 20

[augment]
n_samples = 3000
class_ratios = [0.6, 0.2, 0.2]

[gbdt]
num_trees = 30

[train]
data = "real"

[search]
iterations = 6

[search.space]
class_counts = [{{ lo = 200, hi = 1500 }}, {{ lo = 100, hi = 500 }}, {{ lo = 100, hi = 500 }}]
num_leaves = {{ lo = 10, hi = 50 }}
max_depth = {{ lo = 3, hi = 15 }}
min_data_in_leaf = {{ lo = 20, hi = 100 }}
"#,
        cell = crate::dataset::DEFAULT_CELL_SIZE,
        side = DEMO_GRID_SIDE,
    );
    let path = dir.join("pipeline.toml");
    std::fs::write(&path, config)?;
    Ok(path)
}
