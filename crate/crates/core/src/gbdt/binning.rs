//! Quantile histogram bins.

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureKind, FeatureSchema, TabularDataset};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_BINS: usize = 255;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureBins {
    /// Strictly increasing cut points; a value `v` falls in the bin equal to
    /// the number of cuts strictly below it, so `v <= cuts[b]` lands at or
    /// before bin `b` and values above the last cut share the top bin.
    Numeric { cuts: Vec<f64> },
    /// One bin per declared level.
    Categorical { n_levels: usize },
}

impl FeatureBins {
    pub fn n_bins(&self) -> usize {
        match self {
            FeatureBins::Numeric { cuts } => cuts.len() + 1,
            FeatureBins::Categorical { n_levels } => *n_levels,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, FeatureBins::Categorical { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    pub max_bins: usize,
    pub features: Vec<FeatureBins>,
}

impl BinMapper {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.features[feature].n_bins()
    }

    pub fn bin(&self, feature: usize, value: f64) -> Result<u32> {
        match &self.features[feature] {
            FeatureBins::Numeric { cuts } => {
                if value.is_nan() {
                    return Err(Error::InvalidArgument(format!("feature {feature}: NaN value")));
                }
                Ok(cuts.partition_point(|&c| c < value) as u32)
            }
            FeatureBins::Categorical { n_levels } => {
                if value.fract() != 0.0 || value < 0.0 || value >= *n_levels as f64 {
                    return Err(Error::UnknownLevel {
                        feature: format!("#{feature}"),
                        level: value.to_string(),
                    });
                }
                Ok(value as u32)
            }
        }
    }

    pub fn bin_row(&self, row: &[f64]) -> Result<Vec<u32>> {
        if row.len() != self.n_features() {
            return Err(Error::LengthMismatch {
                left: row.len(),
                right: self.n_features(),
            });
        }
        row.iter().enumerate().map(|(j, &v)| self.bin(j, v)).collect()
    }

    /// Bin every row of a dataset into a column-major matrix.
    pub fn transform(&self, data: &TabularDataset) -> Result<BinnedMatrix> {
        if data.n_features() != self.n_features() {
            return Err(Error::LengthMismatch {
                left: data.n_features(),
                right: self.n_features(),
            });
        }
        let columns = (0..self.n_features())
            .map(|j| data.rows().iter().map(|r| self.bin(j, r[j])).collect::<Result<Vec<u32>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(BinnedMatrix {
            n_rows: data.n_rows(),
            n_bins: self.features.iter().map(|f| f.n_bins() as u32).collect(),
            categorical: self.features.iter().map(FeatureBins::is_categorical).collect(),
            columns,
        })
    }
}

/// Column-major bin indices, one column per original feature.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedMatrix {
    pub n_rows: usize,
    pub n_bins: Vec<u32>,
    pub categorical: Vec<bool>,
    pub columns: Vec<Vec<u32>>,
}

impl BinnedMatrix {
    /// All-numeric matrix from raw bin columns.
    pub fn from_columns(columns: Vec<Vec<u32>>) -> Self {
        let n_rows = columns.first().map_or(0, Vec::len);
        let n_bins = columns.iter().map(|c| c.iter().max().map_or(1, |m| m + 1)).collect();
        let categorical = vec![false; columns.len()];
        BinnedMatrix {
            n_rows,
            n_bins,
            categorical,
            columns,
        }
    }
}

impl BinnedMatrix {
    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, feature: usize) -> u32 {
        self.columns[feature][row]
    }
}

fn cut_between(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Cut points for one numeric column. With at most `max_bins` distinct
/// values every value gets its own bin; otherwise cuts sit at the distinct
/// value boundaries whose cumulative counts lie closest to the equal-mass
/// targets `j n / max_bins`.
pub fn numeric_cuts(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = Vec::new();
    let mut cumulative: Vec<usize> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        if distinct.last() == Some(&v) {
            *cumulative.last_mut().unwrap() = i + 1;
        } else {
            distinct.push(v);
            cumulative.push(i + 1);
        }
    }
    if distinct.len() <= 1 {
        return Vec::new();
    }
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| cut_between(w[0], w[1])).collect();
    }
    let n = sorted.len() as f64;
    let mut cuts = Vec::with_capacity(max_bins - 1);
    // Boundary i sits between distinct[i] and distinct[i + 1].
    let mut next = 0usize;
    for j in 1..max_bins {
        let target = j as f64 * n / max_bins as f64;
        if next >= distinct.len() - 1 {
            break;
        }
        let mut best = next;
        let mut best_err = (cumulative[next] as f64 - target).abs();
        for (i, &c) in cumulative.iter().enumerate().take(distinct.len() - 1).skip(next + 1) {
            let err = (c as f64 - target).abs();
            if err < best_err {
                best = i;
                best_err = err;
            } else if c as f64 > target {
                break;
            }
        }
        cuts.push(cut_between(distinct[best], distinct[best + 1]));
        next = best + 1;
    }
    cuts
}

/// Fit bin boundaries on a dataset and bin it.
pub fn quantile_bin(data: &TabularDataset, max_bins: usize) -> Result<(BinMapper, BinnedMatrix)> {
    let mapper = fit_bins(data, max_bins)?;
    let binned = mapper.transform(data)?;
    Ok((mapper, binned))
}

pub fn fit_bins(data: &TabularDataset, max_bins: usize) -> Result<BinMapper> {
    if max_bins < 2 {
        return Err(Error::InvalidArgument(format!("max_bins must be at least 2, got {max_bins}")));
    }
    Ok(BinMapper {
        max_bins,
        features: feature_bins(data.schema(), data, max_bins)?,
    })
}

fn feature_bins(schema: &FeatureSchema, data: &TabularDataset, max_bins: usize) -> Result<Vec<FeatureBins>> {
    schema
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| match f.kind {
            FeatureKind::Categorical => {
                if f.levels.len() > max_bins {
                    return Err(Error::InvalidArgument(format!(
                        "feature `{}` has {} levels, more than max_bins = {max_bins}",
                        f.name,
                        f.levels.len()
                    )));
                }
                Ok(FeatureBins::Categorical { n_levels: f.levels.len() })
            }
            FeatureKind::Numeric => Ok(FeatureBins::Numeric {
                cuts: numeric_cuts(&data.column(j), max_bins),
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureDef, FeatureSchema};
    use proptest::prelude::*;

    fn one_column(values: &[f64]) -> TabularDataset {
        let schema = FeatureSchema::all_numeric(["x"]).unwrap();
        TabularDataset::new(schema, values.iter().map(|&v| vec![v]).collect(), None).unwrap()
    }

    #[test]
    fn few_distinct_values_get_own_bins() {
        let (mapper, binned) = quantile_bin(&one_column(&[1.0, 2.0, 3.0, 2.0]), 255).unwrap();
        assert_eq!(mapper.n_bins(0), 3);
        assert_eq!(binned.columns[0], [0, 1, 2, 1]);
        assert_eq!(mapper.bin(0, 100.0).unwrap(), 2);
        assert_eq!(mapper.bin(0, -100.0).unwrap(), 0);
    }

    /// Equal-mass oracle: sorted distinct values split into `bins` runs of
    /// `n / bins`.
    #[test]
    fn uniform_values_quartiles() {
        let mut rng = crate::rng::rng(4);
        use rand::Rng as _;
        let values: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let (mapper, binned) = quantile_bin(&one_column(&values), 4).unwrap();
        assert_eq!(mapper.n_bins(0), 4);
        let mut counts = [0usize; 4];
        for &b in &binned.columns[0] {
            counts[b as usize] += 1;
        }
        for c in counts {
            assert!((249..=251).contains(&c), "{counts:?}");
        }
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        for q in 1..4 {
            let boundary = q * 250;
            assert_eq!(mapper.bin(0, sorted[boundary - 1]).unwrap() as usize, q - 1);
            assert_eq!(mapper.bin(0, sorted[boundary]).unwrap() as usize, q);
        }
    }

    #[test]
    fn categorical_bins_per_level() {
        let schema = FeatureSchema::new(vec![FeatureDef::categorical("flood", ["low", "high"])]).unwrap();
        let data = TabularDataset::new(schema, vec![vec![0.0], vec![1.0]], None).unwrap();
        let (mapper, binned) = quantile_bin(&data, 255).unwrap();
        assert_eq!(mapper.n_bins(0), 2);
        assert_eq!(binned.columns[0], [0, 1]);
        assert!(matches!(mapper.bin(0, 2.0), Err(Error::UnknownLevel { .. })));
    }

    #[test]
    fn constant_column_single_bin() {
        let (mapper, _) = quantile_bin(&one_column(&[5.0; 10]), 16).unwrap();
        assert_eq!(mapper.n_bins(0), 1);
        assert!(quantile_bin(&one_column(&[1.0]), 1).is_err());
    }

    #[test]
    fn adjacent_floats_separate() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let (mapper, binned) = quantile_bin(&one_column(&[a, b]), 8).unwrap();
        assert_eq!(mapper.n_bins(0), 2);
        assert_eq!(binned.columns[0], [0, 1]);
    }

    proptest! {
        #[test]
        fn every_value_in_range_and_cuts_increasing(values in prop::collection::vec(-1e3f64..1e3, 1..400), max_bins in 2usize..40) {
            let (mapper, binned) = quantile_bin(&one_column(&values), max_bins).unwrap();
            if let FeatureBins::Numeric { cuts } = &mapper.features[0] {
                prop_assert!(cuts.windows(2).all(|w| w[0] < w[1]));
            }
            prop_assert!(mapper.n_bins(0) <= max_bins);
            for (&v, &b) in values.iter().zip(&binned.columns[0]) {
                prop_assert!((b as usize) < mapper.n_bins(0));
                // Order preserving.
                for (&w, &c) in values.iter().zip(&binned.columns[0]) {
                    if v < w { prop_assert!(b <= c); }
                }
            }
        }
    }
}
