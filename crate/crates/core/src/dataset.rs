//! Claim ingestion, capping, normalization, grid aggregation, and the
//! tabular feature container shared by every downstream stage.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_CELL_SIZE: f64 = 500.0;
pub const DEFAULT_CAP_PERCENTILE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClaimSource {
    #[serde(rename = "NFIP")]
    Nfip,
    #[serde(rename = "IA")]
    Ia,
}

impl ClaimSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ClaimSource::Nfip => "NFIP",
            ClaimSource::Ia => "IA",
        }
    }
}

/// One structure-damage claim located at a building, in planar meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub source: ClaimSource,
    pub building_id: String,
    pub x: f64,
    pub y: f64,
    pub amount: f64,
}

/// Combine the two claim sources. A building with any NFIP claim keeps only
/// its NFIP claims; IA claims for that building are dropped. Output is sorted
/// by claim id.
pub fn merge_claims(nfip: &[ClaimRecord], ia: &[ClaimRecord]) -> Result<Vec<ClaimRecord>> {
    let mut seen = HashSet::with_capacity(nfip.len() + ia.len());
    for record in nfip.iter().chain(ia) {
        if !seen.insert(record.claim_id.as_str()) {
            return Err(Error::DuplicateClaimId(record.claim_id.clone()));
        }
    }
    let insured: HashSet<&str> = nfip.iter().map(|r| r.building_id.as_str()).collect();
    let mut merged: Vec<ClaimRecord> = nfip
        .iter()
        .chain(ia.iter().filter(|r| !insured.contains(r.building_id.as_str())))
        .cloned()
        .collect();
    merged.sort_by(|a, b| a.claim_id.cmp(&b.claim_id));
    Ok(merged)
}

/// Nearest-rank percentile: the element at 1-based rank `ceil(p * n)` of the
/// sorted values.
pub fn nearest_rank(values: &[f64], percentile: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of an empty list"));
    }
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "percentile {percentile} outside (0, 1]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Guard against p*n landing a hair above an integer through rounding.
    let rank = ((percentile * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[rank - 1])
}

/// Replace every value above the nearest-rank percentile by that percentile.
pub fn cap_values(values: &[f64], percentile: f64) -> Result<Vec<f64>> {
    let cap = nearest_rank(values, percentile)?;
    Ok(values.iter().map(|&v| v.min(cap)).collect())
}

/// `(v - min) / (max - min)`; a constant input maps to all zeros.
pub fn min_max_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("normalization of an empty list"));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if range <= 0.0 {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values
        .iter()
        .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
        .collect())
}

/// A merged claim together with its capped amount and normalized value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedClaim {
    pub claim_id: String,
    pub source: ClaimSource,
    pub building_id: String,
    pub x: f64,
    pub y: f64,
    pub amount: f64,
    pub capped: f64,
    pub normalized: f64,
}

/// Cap then min-max normalize claim amounts separately within each source,
/// since the two programs report on different scales.
pub fn normalize_claims(claims: &[ClaimRecord], percentile: f64) -> Result<Vec<NormalizedClaim>> {
    let mut out: Vec<NormalizedClaim> = claims
        .iter()
        .map(|c| NormalizedClaim {
            claim_id: c.claim_id.clone(),
            source: c.source,
            building_id: c.building_id.clone(),
            x: c.x,
            y: c.y,
            amount: c.amount,
            capped: c.amount,
            normalized: 0.0,
        })
        .collect();
    for source in [ClaimSource::Nfip, ClaimSource::Ia] {
        let idx: Vec<usize> = (0..out.len()).filter(|&i| out[i].source == source).collect();
        if idx.is_empty() {
            continue;
        }
        let amounts: Vec<f64> = idx.iter().map(|&i| out[i].amount).collect();
        let capped = cap_values(&amounts, percentile)?;
        let normalized = min_max_normalize(&capped)?;
        for ((&i, c), v) in idx.iter().zip(capped).zip(normalized) {
            out[i].capped = c;
            out[i].normalized = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    pub n_cols: usize,
    pub n_rows: usize,
}

fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE
}

/// `(col, row)` index of a grid cell.
pub type CellId = (usize, usize);

impl GridSpec {
    pub fn new(origin_x: f64, origin_y: f64, cell_size: f64, n_cols: usize, n_rows: usize) -> Result<Self> {
        let grid = GridSpec {
            origin_x,
            origin_y,
            cell_size,
            n_cols,
            n_rows,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cell_size must be positive, got {}",
                self.cell_size
            )));
        }
        if self.n_cols == 0 || self.n_rows == 0 {
            return Err(Error::InvalidArgument("grid must have at least one row and column".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_cols * self.n_rows
    }

    /// Half-open cell lookup: `[lo, hi)` on both axes.
    pub fn cell_of(&self, x: f64, y: f64) -> Result<CellId> {
        let fx = ((x - self.origin_x) / self.cell_size).floor();
        let fy = ((y - self.origin_y) / self.cell_size).floor();
        if !(fx >= 0.0 && fy >= 0.0 && fx < self.n_cols as f64 && fy < self.n_rows as f64) {
            return Err(Error::OutOfExtent { x, y });
        }
        Ok((fx as usize, fy as usize))
    }

    /// Row-major position of a cell in [`aggregate_to_grid`] output.
    pub fn linear_index(&self, (col, row): CellId) -> usize {
        row * self.n_cols + col
    }
}

/// Free-function form of [`GridSpec::cell_of`].
pub fn cell_of(point: (f64, f64), grid: &GridSpec) -> Result<CellId> {
    grid.cell_of(point.0, point.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub cell_col: usize,
    pub cell_row: usize,
    pub claim_sum: f64,
    pub claim_count: usize,
}

impl GridCell {
    pub fn id(&self) -> CellId {
        (self.cell_col, self.cell_row)
    }
}

/// Sum normalized claim values per cell. Every cell of the grid is emitted,
/// row-major (row outer, column inner), including empty ones.
pub fn aggregate_to_grid(claims: &[((f64, f64), f64)], grid: &GridSpec) -> Result<Vec<GridCell>> {
    grid.validate()?;
    let mut cells: Vec<GridCell> = (0..grid.n_rows)
        .flat_map(|row| {
            (0..grid.n_cols).map(move |col| GridCell {
                cell_col: col,
                cell_row: row,
                claim_sum: 0.0,
                claim_count: 0,
            })
        })
        .collect();
    for &((x, y), value) in claims {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument(format!(
                "normalized claim value {value} outside [0, 1]"
            )));
        }
        let id = grid.cell_of(x, y)?;
        let cell = &mut cells[grid.linear_index(id)];
        cell.claim_sum += value;
        cell.claim_count += 1;
    }
    Ok(cells)
}

// ---------------------------------------------------------------------------
// Feature tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl FeatureDef {
    pub fn numeric(name: impl Into<String>) -> Self {
        FeatureDef {
            name: name.into(),
            kind: FeatureKind::Numeric,
            levels: Vec::new(),
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        FeatureDef {
            name: name.into(),
            kind: FeatureKind::Categorical,
            levels: levels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    /// Level index of a categorical value.
    pub fn level_index(&self, level: &str) -> Result<usize> {
        self.levels
            .iter()
            .position(|l| l == level)
            .ok_or_else(|| Error::UnknownLevel {
                feature: self.name.clone(),
                level: level.to_string(),
            })
    }
}

/// Ordered feature declarations. Categorical values are stored in rows as
/// their level index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self> {
        let schema = FeatureSchema { features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn all_numeric<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        Self::new(names.into_iter().map(FeatureDef::numeric).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            match f.kind {
                FeatureKind::Categorical if f.levels.is_empty() => {
                    return Err(Error::Schema(format!("categorical feature `{}` declares no levels", f.name)))
                }
                FeatureKind::Categorical => {
                    let unique: HashSet<&String> = f.levels.iter().collect();
                    if unique.len() != f.levels.len() {
                        return Err(Error::Schema(format!("feature `{}` repeats a level", f.name)));
                    }
                }
                FeatureKind::Numeric if !f.levels.is_empty() => {
                    return Err(Error::Schema(format!("numeric feature `{}` declares levels", f.name)))
                }
                FeatureKind::Numeric => {}
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    /// Check a row's length and value domain.
    pub fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.len() {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: self.len(),
            });
        }
        for (f, &v) in self.features.iter().zip(row) {
            if !v.is_finite() {
                return Err(Error::Schema(format!("feature `{}` has non-finite value {v}", f.name)));
            }
            if f.is_categorical() && (v.fract() != 0.0 || v < 0.0 || v as usize >= f.levels.len()) {
                return Err(Error::UnknownLevel {
                    feature: f.name.clone(),
                    level: v.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Parse one textual value according to the feature kind.
    pub fn parse_value(&self, j: usize, text: &str) -> Result<f64> {
        let f = &self.features[j];
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Schema(format!("missing value for feature `{}`", f.name)));
        }
        match f.kind {
            FeatureKind::Categorical => f.level_index(text).map(|i| i as f64),
            FeatureKind::Numeric => {
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Schema(format!("feature `{}`: `{text}` is not a number", f.name)))?;
                if !v.is_finite() {
                    return Err(Error::Schema(format!("feature `{}`: non-finite value", f.name)));
                }
                Ok(v)
            }
        }
    }

    pub fn format_value(&self, j: usize, v: f64) -> String {
        let f = &self.features[j];
        match f.kind {
            FeatureKind::Categorical => f.levels[v as usize].clone(),
            FeatureKind::Numeric => v.to_string(),
        }
    }
}

/// Rectangular, complete feature matrix under a schema, with optional class
/// labels in `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    schema: FeatureSchema,
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<usize>>,
}

impl TabularDataset {
    pub fn new(schema: FeatureSchema, rows: Vec<Vec<f64>>, labels: Option<Vec<usize>>) -> Result<Self> {
        schema.validate()?;
        for row in &rows {
            schema.check_row(row)?;
        }
        if let Some(labels) = &labels {
            if labels.len() != rows.len() {
                return Err(Error::LengthMismatch {
                    left: labels.len(),
                    right: rows.len(),
                });
            }
        }
        Ok(TabularDataset { schema, rows, labels })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or an error when the dataset is unlabeled.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Error::InvalidArgument("dataset has no labels".into()))
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.rows.len() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: self.rows.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> TabularDataset {
        TabularDataset {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Per-class row counts over `0..k`.
    pub fn class_counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for &c in self.labels().unwrap_or(&[]) {
            if c < k {
                counts[c] += 1;
            }
        }
        counts
    }

    /// Vertically stack datasets sharing a schema.
    pub fn concat(parts: &[&TabularDataset]) -> Result<TabularDataset> {
        let first = parts.first().ok_or(Error::Empty("concatenation of no datasets"))?;
        let mut rows = Vec::new();
        let mut labels = first.labels.is_some().then(Vec::new);
        for part in parts {
            if part.schema != first.schema {
                return Err(Error::Schema("cannot concatenate datasets with different schemas".into()));
            }
            rows.extend(part.rows.iter().cloned());
            match (&mut labels, &part.labels) {
                (Some(acc), Some(l)) => acc.extend_from_slice(l),
                (None, None) => {}
                _ => return Err(Error::InvalidArgument("mixing labeled and unlabeled datasets".into())),
            }
        }
        Ok(TabularDataset {
            schema: first.schema.clone(),
            rows,
            labels,
        })
    }

    /// Min-max normalize every numeric column in place of the original values.
    pub fn normalize_numeric(&self) -> Result<TabularDataset> {
        let mut rows = self.rows.clone();
        for (j, f) in self.schema.features.iter().enumerate() {
            if f.is_categorical() || rows.is_empty() {
                continue;
            }
            let normalized = min_max_normalize(&self.column(j))?;
            for (row, v) in rows.iter_mut().zip(normalized) {
                row[j] = v;
            }
        }
        Ok(TabularDataset {
            schema: self.schema.clone(),
            rows,
            labels: self.labels.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// CSV formats
// ---------------------------------------------------------------------------

fn parse_error(file: &str, err: &csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    let message = match err.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => err.to_string(),
    };
    Error::Parse {
        file: file.to_string(),
        line,
        message,
    }
}

/// Read a claims CSV (`claim_id,source,building_id,x,y,amount`). Rows with
/// zero damage are dropped; negative or non-finite amounts are errors.
pub fn read_claims<R: Read>(reader: R, file: &str) -> Result<Vec<ClaimRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_error(file, &e))?.clone();
    let expected = ["claim_id", "source", "building_id", "x", "y", "amount"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            file: file.to_string(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for result in rdr.deserialize::<ClaimRecord>() {
        let record = result.map_err(|e| parse_error(file, &e))?;
        if !(record.amount >= 0.0 && record.amount.is_finite() && record.x.is_finite() && record.y.is_finite()) {
            return Err(Error::Parse {
                file: file.to_string(),
                line: out.len() as u64 + 2,
                message: format!("claim `{}` has an invalid amount or coordinate", record.claim_id),
            });
        }
        if record.amount > 0.0 {
            out.push(record);
        }
    }
    Ok(out)
}

pub fn read_claims_file(path: &Path) -> Result<Vec<ClaimRecord>> {
    let file = std::fs::File::open(path)?;
    read_claims(file, &path.display().to_string())
}

pub fn write_claims<W: Write>(writer: W, claims: &[ClaimRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if claims.is_empty() {
        wtr.write_record(["claim_id", "source", "building_id", "x", "y", "amount"])?;
    }
    for c in claims {
        wtr.serialize(c)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Split a claim list by source.
pub fn split_by_source(claims: Vec<ClaimRecord>) -> (Vec<ClaimRecord>, Vec<ClaimRecord>) {
    claims.into_iter().partition(|c| c.source == ClaimSource::Nfip)
}

pub fn write_normalized_claims<W: Write>(writer: W, claims: &[NormalizedClaim]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["claim_id", "source", "building_id", "x", "y", "amount", "capped", "normalized"])?;
    for c in claims {
        wtr.write_record([
            c.claim_id.clone(),
            c.source.as_str().to_string(),
            c.building_id.clone(),
            c.x.to_string(),
            c.y.to_string(),
            c.amount.to_string(),
            c.capped.to_string(),
            c.normalized.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_grid_cells<W: Write>(writer: W, cells: &[GridCell]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if cells.is_empty() {
        wtr.write_record(["cell_col", "cell_row", "claim_sum", "claim_count"])?;
    }
    for c in cells {
        wtr.serialize(c)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_grid_cells<R: Read>(reader: R, file: &str) -> Result<Vec<GridCell>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(|e| parse_error(file, &e)))
        .collect()
}

/// Feature table keyed by grid cell: `cell_col,cell_row,<schema names...>`.
pub fn read_features<R: Read>(reader: R, file: &str, schema: &FeatureSchema) -> Result<(Vec<CellId>, TabularDataset)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_error(file, &e))?.clone();
    let expected: Vec<&str> = ["cell_col", "cell_row"].into_iter().chain(schema.names()).collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            file: file.to_string(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for result in rdr.records() {
        let record = result.map_err(|e| parse_error(file, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let at = |message: String| Error::Parse {
            file: file.to_string(),
            line,
            message,
        };
        if record.len() != expected.len() {
            return Err(at(format!("expected {} fields, found {}", expected.len(), record.len())));
        }
        let col: usize = record[0].parse().map_err(|_| at(format!("bad cell_col `{}`", &record[0])))?;
        let row: usize = record[1].parse().map_err(|_| at(format!("bad cell_row `{}`", &record[1])))?;
        if !seen.insert((col, row)) {
            return Err(at(format!("duplicate cell ({col}, {row})")));
        }
        let values = (0..schema.len())
            .map(|j| schema.parse_value(j, &record[j + 2]))
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| at(e.to_string()))?;
        cells.push((col, row));
        rows.push(values);
    }
    Ok((cells, TabularDataset::new(schema.clone(), rows, None)?))
}

pub fn read_features_file(path: &Path, schema: &FeatureSchema) -> Result<(Vec<CellId>, TabularDataset)> {
    let file = std::fs::File::open(path)?;
    read_features(file, &path.display().to_string(), schema)
}

pub fn write_features<W: Write>(writer: W, cells: &[CellId], data: &TabularDataset) -> Result<()> {
    if cells.len() != data.n_rows() {
        return Err(Error::LengthMismatch {
            left: cells.len(),
            right: data.n_rows(),
        });
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let header: Vec<&str> = ["cell_col", "cell_row"].into_iter().chain(data.schema().names()).collect();
    wtr.write_record(&header)?;
    for (&(col, row), values) in cells.iter().zip(data.rows()) {
        let mut record = vec![col.to_string(), row.to_string()];
        record.extend(values.iter().enumerate().map(|(j, &v)| data.schema().format_value(j, v)));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub const LABEL_COLUMN: &str = "pde_class";

/// Labeled table without cell keys: `<schema names...>,pde_class`.
pub fn write_labeled<W: Write>(writer: W, data: &TabularDataset) -> Result<()> {
    let labels = data.require_labels()?;
    let mut wtr = csv::Writer::from_writer(writer);
    let header: Vec<&str> = data.schema().names().chain([LABEL_COLUMN]).collect();
    wtr.write_record(&header)?;
    for (values, &label) in data.rows().iter().zip(labels) {
        let mut record: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(j, &v)| data.schema().format_value(j, v))
            .collect();
        record.push(label.to_string());
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_labeled<R: Read>(reader: R, file: &str, schema: &FeatureSchema) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_error(file, &e))?.clone();
    let expected: Vec<&str> = schema.names().chain([LABEL_COLUMN]).collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            file: file.to_string(),
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for result in rdr.records() {
        let record = result.map_err(|e| parse_error(file, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let at = |message: String| Error::Parse {
            file: file.to_string(),
            line,
            message,
        };
        let values = (0..schema.len())
            .map(|j| schema.parse_value(j, &record[j]))
            .collect::<Result<Vec<f64>>>()
            .map_err(|e| at(e.to_string()))?;
        let label: usize = record[schema.len()]
            .parse()
            .map_err(|_| at(format!("bad label `{}`", &record[schema.len()])))?;
        rows.push(values);
        labels.push(label);
    }
    TabularDataset::new(schema.clone(), rows, Some(labels))
}

/// Attach per-cell labels to a cell-keyed feature table. Cells without a
/// label are an error.
pub fn join_labels(cells: &[CellId], data: &TabularDataset, labels: &BTreeMap<CellId, usize>) -> Result<TabularDataset> {
    let joined = cells
        .iter()
        .map(|id| {
            labels
                .get(id)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("no label for cell ({}, {})", id.0, id.1)))
        })
        .collect::<Result<Vec<usize>>>()?;
    data.clone().with_labels(joined)
}

/// Count claims per building id; handy for reporting merge results.
pub fn claims_per_building(claims: &[ClaimRecord]) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for c in claims {
        *counts.entry(c.building_id.as_str()).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn claim(id: &str, source: ClaimSource, building: &str, amount: f64) -> ClaimRecord {
        ClaimRecord {
            claim_id: id.into(),
            source,
            building_id: building.into(),
            x: 10.0,
            y: 10.0,
            amount,
        }
    }

    #[test]
    fn grid_cells_round_trip() {
        let grid = GridSpec::new(0.0, 0.0, 10.0, 2, 2).unwrap();
        let cells = aggregate_to_grid(&[((1.0, 1.0), 0.5), ((15.0, 1.0), 0.25)], &grid).unwrap();
        let mut buf = Vec::new();
        write_grid_cells(&mut buf, &cells).unwrap();
        assert_eq!(read_grid_cells(buf.as_slice(), "cells").unwrap(), cells);
        let mut empty = Vec::new();
        write_grid_cells(&mut empty, &[]).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), "cell_col,cell_row,claim_sum,claim_count\n");
    }

    #[test]
    fn nfip_wins_for_shared_building() {
        let nfip = vec![claim("n1", ClaimSource::Nfip, "B", 10_000.0)];
        let ia = vec![claim("i1", ClaimSource::Ia, "B", 2_000.0)];
        let merged = merge_claims(&nfip, &ia).unwrap();
        assert_eq!(merged, nfip);
    }

    #[test]
    fn ia_passes_through_without_nfip() {
        let ia = vec![claim("i1", ClaimSource::Ia, "B", 2_000.0)];
        assert_eq!(merge_claims(&[], &ia).unwrap(), ia);
    }

    #[test]
    fn disjoint_buildings_both_kept() {
        let nfip = vec![claim("n1", ClaimSource::Nfip, "A", 1.0)];
        let ia = vec![claim("i1", ClaimSource::Ia, "B", 1.0)];
        assert_eq!(merge_claims(&nfip, &ia).unwrap().len(), 2);
    }

    #[test]
    fn duplicate_claim_id_names_the_id() {
        let nfip = vec![claim("c7", ClaimSource::Nfip, "A", 1.0)];
        let ia = vec![claim("c7", ClaimSource::Ia, "B", 1.0)];
        match merge_claims(&nfip, &ia) {
            Err(Error::DuplicateClaimId(id)) => assert_eq!(id, "c7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn merge_output_sorted_by_claim_id() {
        let nfip = vec![claim("z", ClaimSource::Nfip, "A", 1.0), claim("b", ClaimSource::Nfip, "A", 1.0)];
        let ia = vec![claim("m", ClaimSource::Ia, "C", 1.0)];
        let ids: Vec<_> = merge_claims(&nfip, &ia).unwrap().into_iter().map(|c| c.claim_id).collect();
        assert_eq!(ids, ["b", "m", "z"]);
    }

    #[test]
    fn cap_nearest_rank() {
        assert_eq!(cap_values(&[0.0, 1.0, 2.0, 3.0, 100.0], 0.8).unwrap(), [0.0, 1.0, 2.0, 3.0, 3.0]);
        let xs = [4.0, -1.0, 9.0, 2.5];
        assert_eq!(cap_values(&xs, 1.0).unwrap(), xs);
        assert_eq!(cap_values(&[5.0, 5.0, 5.0], 0.5).unwrap(), [5.0, 5.0, 5.0]);
        assert!(matches!(cap_values(&[], 0.5), Err(Error::Empty(_))));
        assert!(cap_values(&[1.0], 0.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(min_max_normalize(&[0.0, 5.0, 10.0]).unwrap(), [0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&[7.0, 7.0, 7.0]).unwrap(), [0.0, 0.0, 0.0]);
        assert_eq!(min_max_normalize(&[-2.0, 0.0, 2.0]).unwrap(), [0.0, 0.5, 1.0]);
        assert!(min_max_normalize(&[]).is_err());
    }

    #[test]
    fn cell_lookup() {
        let grid = GridSpec::new(0.0, 0.0, 500.0, 10, 10).unwrap();
        assert_eq!(grid.cell_of(750.0, 1250.0).unwrap(), (1, 2));
        assert_eq!(cell_of((500.0, 0.0), &grid).unwrap(), (1, 0));
        assert!(matches!(grid.cell_of(-1.0, 0.0), Err(Error::OutOfExtent { x, .. }) if x == -1.0));
        assert!(grid.cell_of(5000.0, 0.0).is_err());
        assert!(grid.cell_of(4999.9, 4999.9).is_ok());
        assert!(GridSpec::new(0.0, 0.0, 0.0, 1, 1).is_err());
    }

    #[test]
    fn aggregation_examples() {
        let grid = GridSpec::new(0.0, 0.0, 500.0, 3, 3).unwrap();
        let cells = aggregate_to_grid(&[((250.0, 250.0), 0.7)], &grid).unwrap();
        assert_eq!(cells.len(), 9);
        assert_eq!(cells[0].claim_sum, 0.7);
        assert!(cells[1..].iter().all(|c| c.claim_sum == 0.0));

        let cells = aggregate_to_grid(&[((600.0, 10.0), 0.2), ((900.0, 400.0), 0.3)], &grid).unwrap();
        assert_eq!(cells[1].claim_sum, 0.5);
        assert_eq!(cells[1].claim_count, 2);

        assert!(aggregate_to_grid(&[((600.0, 10.0), 1.5)], &grid).is_err());
        assert!(aggregate_to_grid(&[((-600.0, 10.0), 0.5)], &grid).is_err());
    }

    #[test]
    fn empty_grid_of_study_size() {
        // 18,823 cells: a 7 x 2,689 grid.
        let grid = GridSpec::new(0.0, 0.0, 500.0, 7, 2689).unwrap();
        let cells = aggregate_to_grid(&[], &grid).unwrap();
        assert_eq!(cells.len(), 18_823);
        assert!(cells.iter().all(|c| c.claim_sum == 0.0 && c.claim_count == 0));
    }

    #[test]
    fn per_source_normalization() {
        let claims = vec![
            claim("a", ClaimSource::Nfip, "1", 100.0),
            claim("b", ClaimSource::Nfip, "2", 300.0),
            claim("c", ClaimSource::Ia, "3", 5.0),
            claim("d", ClaimSource::Ia, "4", 10.0),
        ];
        let n = normalize_claims(&claims, 1.0).unwrap();
        let values: Vec<f64> = n.iter().map(|c| c.normalized).collect();
        assert_eq!(values, [0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn schema_rejects_duplicates_and_unknown_levels() {
        assert!(FeatureSchema::new(vec![FeatureDef::numeric("a"), FeatureDef::numeric("a")]).is_err());
        let schema = FeatureSchema::new(vec![FeatureDef::categorical("flood", ["low", "high"])]).unwrap();
        assert!(matches!(schema.parse_value(0, "medium"), Err(Error::UnknownLevel { .. })));
        assert_eq!(schema.parse_value(0, "high").unwrap(), 1.0);
        assert!(TabularDataset::new(schema, vec![vec![2.0]], None).is_err());
    }

    #[test]
    fn features_csv_roundtrip_and_missing_values() {
        let schema = FeatureSchema::new(vec![FeatureDef::numeric("elev"), FeatureDef::categorical("stream", ["no", "yes"])]).unwrap();
        let text = "cell_col,cell_row,elev,stream\n0,0,1.5,yes\n1,0,2.5,no\n";
        let (cells, data) = read_features(text.as_bytes(), "f.csv", &schema).unwrap();
        assert_eq!(cells, [(0, 0), (1, 0)]);
        assert_eq!(data.rows(), &[vec![1.5, 1.0], vec![2.5, 0.0]]);
        let mut out = Vec::new();
        write_features(&mut out, &cells, &data).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);

        let missing = "cell_col,cell_row,elev,stream\n0,0,,yes\n";
        match read_features(missing.as_bytes(), "f.csv", &schema) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn claims_csv_line_numbered_errors() {
        let text = "claim_id,source,building_id,x,y,amount\nc1,NFIP,b1,1,2,3\nc2,FEMA,b2,1,2,3\n";
        match read_claims(text.as_bytes(), "claims.csv") {
            Err(Error::Parse { line, file, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(file, "claims.csv");
            }
            other => panic!("unexpected {other:?}"),
        }
        let zero = "claim_id,source,building_id,x,y,amount\nc1,NFIP,b1,1,2,0\nc2,IA,b2,1,2,3\n";
        let claims = read_claims(zero.as_bytes(), "claims.csv").unwrap();
        assert_eq!(claims.len(), 1);
        assert_eq!(claims[0].source, ClaimSource::Ia);
    }

    proptest! {
        #[test]
        fn aggregation_conserves_mass(points in prop::collection::vec((0.0f64..2000.0, 0.0f64..1500.0, 0.0f64..=1.0), 0..300)) {
            let grid = GridSpec::new(0.0, 0.0, 500.0, 4, 3).unwrap();
            let claims: Vec<_> = points.iter().map(|&(x, y, v)| ((x, y), v)).collect();
            let cells = aggregate_to_grid(&claims, &grid).unwrap();
            let total: f64 = points.iter().map(|p| p.2).sum();
            let gridded: f64 = cells.iter().map(|c| c.claim_sum).sum();
            prop_assert!((total - gridded).abs() <= 1e-9);
            prop_assert_eq!(cells.iter().map(|c| c.claim_count).sum::<usize>(), points.len());
        }

        #[test]
        fn cap_is_monotone_and_order_preserving(values in prop::collection::vec(-1e6f64..1e6, 1..50), p in 0.01f64..=1.0) {
            let capped = cap_values(&values, p).unwrap();
            prop_assert_eq!(capped.len(), values.len());
            for (c, v) in capped.iter().zip(&values) {
                prop_assert!(c <= v);
            }
            for i in 0..values.len() {
                for j in 0..values.len() {
                    if values[i] <= values[j] {
                        prop_assert!(capped[i] <= capped[j]);
                    }
                }
            }
        }

        #[test]
        fn normalize_in_unit_range_and_idempotent(values in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let once = min_max_normalize(&values).unwrap();
            prop_assert!(once.iter().all(|v| (0.0..=1.0).contains(v)));
            let lo = once.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = once.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo == 0.0 && hi == 1.0 {
                prop_assert_eq!(min_max_normalize(&once).unwrap(), once);
            }
        }

        #[test]
        fn merge_is_idempotent(n in 0usize..8, m in 0usize..8, overlap in 0usize..4) {
            let nfip: Vec<_> = (0..n).map(|i| claim(&format!("n{i}"), ClaimSource::Nfip, &format!("b{i}"), 1.0)).collect();
            let ia: Vec<_> = (0..m).map(|i| claim(&format!("i{i}"), ClaimSource::Ia, &format!("b{}", i + n.saturating_sub(overlap)), 1.0)).collect();
            let merged = merge_claims(&nfip, &ia).unwrap();
            prop_assert_eq!(merge_claims(&merged, &[]).unwrap(), merged);
        }

        #[test]
        fn cells_partition_the_extent(x in 0.0f64..1500.0, y in 0.0f64..1000.0) {
            let grid = GridSpec::new(0.0, 0.0, 500.0, 3, 2).unwrap();
            let (col, row) = grid.cell_of(x, y).unwrap();
            let lo_x = col as f64 * 500.0;
            let lo_y = row as f64 * 500.0;
            prop_assert!(lo_x <= x && x < lo_x + 500.0);
            prop_assert!(lo_y <= y && y < lo_y + 500.0);
        }
    }
}
