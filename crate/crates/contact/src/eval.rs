//! Confusion counts and error-rate tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::forest::ForestModel;
use crate::split::Dataset;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionStats {
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_positives: usize,
    pub true_negatives: usize,
    pub total: usize,
    /// `(FP + FN) / total`.
    pub error_rate: f64,
}

impl ConfusionStats {
    pub fn from_cells(fp: usize, fn_: usize, tp: usize, tn: usize) -> Self {
        let total = fp + fn_ + tp + tn;
        Self {
            false_positives: fp,
            false_negatives: fn_,
            true_positives: tp,
            true_negatives: tn,
            total,
            error_rate: error_rate(fp, fn_, total),
        }
    }

    pub fn from_predictions(predicted: &[u8], actual: &[u8]) -> Self {
        let (mut fp, mut fn_, mut tp, mut tn) = (0, 0, 0, 0);
        for (&p, &y) in predicted.iter().zip(actual) {
            match (p, y) {
                (1, 1) => tp += 1,
                (1, _) => fp += 1,
                (_, 1) => fn_ += 1,
                _ => tn += 1,
            }
        }
        Self::from_cells(fp, fn_, tp, tn)
    }

    pub fn merge(&self, other: &ConfusionStats) -> Self {
        Self::from_cells(
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
            self.true_positives + other.true_positives,
            self.true_negatives + other.true_negatives,
        )
    }
}

/// `(FP + FN) / total`, 0 for an empty set.
pub fn error_rate(fp: usize, fn_: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        (fp + fn_) as f64 / total as f64
    }
}

pub fn evaluate(model: &ForestModel, test: &Dataset) -> ConfusionStats {
    ConfusionStats::from_predictions(&model.predict_all(test), &test.labels)
}

/// One row of an error-rate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub task: String,
    pub protocol: String,
    pub cut_type: String,
    pub stats: ConfusionStats,
}

/// Fixed-width table with FP, FN, total and error rate in percent.
pub fn format_table(rows: &[TableRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<12} {:<8} {:<10} {:>8} {:>8} {:>10} {:>9}", "task", "protocol", "cut_type", "FP", "FN", "total", "error_%").unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<12} {:<8} {:<10} {:>8} {:>8} {:>10} {:>9.3}",
            r.task,
            r.protocol,
            r.cut_type,
            r.stats.false_positives,
            r.stats.false_negatives,
            r.stats.total,
            100.0 * r.stats.error_rate
        )
        .unwrap();
    }
    out
}
