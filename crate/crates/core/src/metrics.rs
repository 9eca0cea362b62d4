//! Classification metrics for imbalanced multiclass problems, and a
//! per-feature marginal similarity score between real and synthetic tables.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};

pub const SIMILARITY_BINS: usize = 20;

/// `counts[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OneVsRest {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Each non-empty row divided by its sum; empty rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                    .collect()
            })
            .collect()
    }

    pub fn one_vs_rest(&self, class: usize) -> OneVsRest {
        let tp = self.counts[class][class];
        let fn_ = self.counts[class].iter().sum::<usize>() - tp;
        let fp = self.counts.iter().map(|row| row[class]).sum::<usize>() - tp;
        OneVsRest {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        }
    }

    pub fn recall(&self, class: usize) -> Rate {
        precision_recall(self.one_vs_rest(class)).1
    }
}

pub fn confusion(actual: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    let mut counts = vec![vec![0; k]; k];
    for (&a, &p) in actual.iter().zip(predicted) {
        if a >= k || p >= k {
            return Err(Error::InvalidArgument(format!("class ({a}, {p}) outside 0..{k}")));
        }
        counts[a][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// A ratio that reports 0 with `degenerate = true` when its denominator is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub degenerate: bool,
}

impl Rate {
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            Rate {
                value: 0.0,
                degenerate: true,
            }
        } else {
            Rate {
                value: num as f64 / den as f64,
                degenerate: false,
            }
        }
    }
}

/// `P = TP / (TP + FP)`, `R = TP / (TP + FN)`.
pub fn precision_recall(c: OneVsRest) -> (Rate, Rate) {
    (Rate::ratio(c.tp, c.tp + c.fp), Rate::ratio(c.tp, c.tp + c.fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Operating points at every distinct score, highest threshold first. Tied
/// scores form one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<OperatingPoint>,
}

impl PrCurve {
    pub fn from_scores(scores: &[f64], positives: &[bool]) -> Result<Self> {
        if scores.len() != positives.len() {
            return Err(Error::LengthMismatch {
                left: scores.len(),
                right: positives.len(),
            });
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidArgument("NaN score".into()));
        }
        let total_pos = positives.iter().filter(|&&p| p).count();
        if total_pos == 0 {
            return Err(Error::NoPositives);
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut points = Vec::new();
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut i = 0;
        while i < order.len() {
            let threshold = scores[order[i]];
            while i < order.len() && scores[order[i]] == threshold {
                if positives[order[i]] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            points.push(OperatingPoint {
                threshold,
                recall: tp as f64 / total_pos as f64,
                precision: tp as f64 / (tp + fp) as f64,
            });
        }
        Ok(PrCurve { points })
    }

    /// `sum_i (R_i - R_{i-1}) P_i` with `R_0 = 0`.
    pub fn average_precision(&self) -> f64 {
        let mut prev = 0.0;
        let mut ap = 0.0;
        for p in &self.points {
            ap += (p.recall - prev) * p.precision;
            prev = p.recall;
        }
        ap
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["threshold", "recall", "precision"])?;
        for p in &self.points {
            wtr.write_record([p.threshold.to_string(), p.recall.to_string(), p.precision.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64> {
    PrCurve::from_scores(scores, positives).map(|c| c.average_precision())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapScore {
    pub per_class: Vec<f64>,
    pub map: f64,
}

/// One-vs-rest AP per class from that class's probability column, averaged.
pub fn mean_average_precision(probs: &[Vec<f64>], labels: &[usize], k: usize) -> Result<MapScore> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    let missing: Vec<usize> = (0..k).filter(|c| !labels.contains(c)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let per_class = (0..k)
        .map(|c| {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let positives: Vec<bool> = labels.iter().map(|&y| y == c).collect();
            average_precision(&scores, &positives)
        })
        .collect::<Result<Vec<f64>>>()?;
    let map = per_class.iter().sum::<f64>() / k as f64;
    Ok(MapScore { per_class, map })
}

pub fn accuracy(actual: &[usize], predicted: &[usize]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Empty("accuracy of no predictions"));
    }
    let hits = actual.iter().zip(predicted).filter(|(a, p)| a == p).count();
    Ok(hits as f64 / actual.len() as f64)
}

fn histogram(values: &[f64], bins: usize, categorical: bool) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    for &v in values {
        let b = if categorical {
            v as usize
        } else {
            ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
        };
        counts[b] += 1.0;
    }
    let n = values.len() as f64;
    counts.iter_mut().for_each(|c| *c /= n);
    counts
}

/// `1 - TV(p, q)` per feature: numeric features over 20 equal-width bins on
/// `[0, 1]`, categorical features over level frequencies. Returns the
/// per-feature scores and their mean.
pub fn marginal_similarity(real: &TabularDataset, synthetic: &TabularDataset) -> Result<(Vec<f64>, f64)> {
    if real.schema() != synthetic.schema() {
        return Err(Error::Schema("real and synthetic schemas differ".into()));
    }
    if real.is_empty() || synthetic.is_empty() {
        return Err(Error::Empty("similarity of an empty table"));
    }
    let scores: Vec<f64> = real
        .schema()
        .features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let bins = if f.is_categorical() { f.levels.len() } else { SIMILARITY_BINS };
            let p = histogram(&real.column(j), bins, f.is_categorical());
            let q = histogram(&synthetic.column(j), bins, f.is_categorical());
            let tv: f64 = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
            (1.0 - tv).clamp(0.0, 1.0)
        })
        .collect();
    let mean = if scores.is_empty() {
        1.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    Ok((scores, mean))
}

/// Everything `evaluate` reports for one model on one labeled table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_rows: usize,
    pub accuracy: f64,
    pub average_precision: Vec<f64>,
    pub map: f64,
    pub precision: Vec<Rate>,
    pub recall: Vec<Rate>,
    pub confusion: ConfusionMatrix,
}

impl EvaluationReport {
    pub fn new(probs: &[Vec<f64>], labels: &[usize], k: usize) -> Result<Self> {
        let predicted: Vec<usize> = probs.iter().map(|p| crate::gbdt::model::argmax(p)).collect();
        let confusion = confusion(labels, &predicted, k)?;
        let map = mean_average_precision(probs, labels, k)?;
        let (precision, recall) = (0..k).map(|c| precision_recall(confusion.one_vs_rest(c))).unzip();
        Ok(EvaluationReport {
            n_rows: labels.len(),
            accuracy: accuracy(labels, &predicted)?,
            average_precision: map.per_class,
            map: map.map,
            precision,
            recall,
            confusion,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "rows: {}", self.n_rows);
        let _ = writeln!(out, "accuracy: {:.6}", self.accuracy);
        let _ = writeln!(out, "mAP: {:.6}", self.map);
        let _ = writeln!(out, "\nclass  AP        precision  recall");
        for c in 0..self.average_precision.len() {
            let flag = |r: &Rate| if r.degenerate { "*" } else { " " };
            let _ = writeln!(
                out,
                "{c:<6} {:.6}  {:.6}{}  {:.6}{}",
                self.average_precision[c],
                self.precision[c].value,
                flag(&self.precision[c]),
                self.recall[c].value,
                flag(&self.recall[c]),
            );
        }
        let _ = writeln!(out, "(* zero denominator, reported as 0)");
        let _ = writeln!(out, "\nconfusion (rows actual, columns predicted):");
        for row in &self.confusion.counts {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>8}")).collect();
            let _ = writeln!(out, "{}", cells.join(""));
        }
        let _ = writeln!(out, "\nrow-normalized confusion:");
        for row in self.confusion.row_normalized() {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>8.4}")).collect();
            let _ = writeln!(out, "{}", cells.join(""));
        }
        out
    }
}
