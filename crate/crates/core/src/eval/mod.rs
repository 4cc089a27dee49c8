//! Metrics, the synthetic multi-source corpus generator, and experiment
//! drivers.

mod experiment;
mod synth;

use serde::{Deserialize, Serialize};

use crate::active::Oracle;
use crate::error::{Error, Result};
use crate::repository::Prediction;

pub use experiment::{
    render_report_table, run_experiment, unified_baseline, ExperimentConfig, ExperimentReport,
    ProblemReport, Strategy,
};
pub use synth::{generate_synthetic, GeneratedCorpus, RegimeSpec, SynthSpec};

/// Match-class counts and the derived precision / recall / F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub false_neg: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Metrics {
    /// Derive rates from counts; an empty denominator yields 0 by
    /// convention, so "no predicted matches" scores F1 = 0.
    pub fn from_counts(tp: usize, fp: usize, false_neg: usize) -> Self {
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            0.0
        };
        let recall = if tp + false_neg > 0 {
            tp as f64 / (tp + false_neg) as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            tp,
            fp,
            false_neg,
            precision,
            recall,
            f1,
        }
    }
}

/// Score predictions against ground truth, counting the match class only.
/// Every predicted pair must be present in the oracle.
pub fn compute_metrics(predictions: &[Prediction], oracle: &Oracle) -> Result<Metrics> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut false_neg = 0usize;
    for p in predictions {
        let truth = oracle
            .lookup(&p.left, &p.right)
            .ok_or_else(|| Error::OracleMiss {
                left: p.left.to_string(),
                right: p.right.to_string(),
            })?;
        match (p.is_match, truth) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => false_neg += 1,
            (false, false) => {}
        }
    }
    Ok(Metrics::from_counts(tp, fp, false_neg))
}

/// Adjusted Rand index between two aligned label sequences. 1.0 iff the
/// partitions are identical up to relabeling.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "label sequences must align");
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    let mut row = vec![0usize; ka];
    let mut col = vec![0usize; kb];
    for (x, y) in a.iter().zip(b) {
        table[*x][*y] += 1;
        row[*x] += 1;
        col[*y] += 1;
    }
    let c2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|v| c2(*v)).sum();
    let sum_a: f64 = row.iter().map(|v| c2(*v)).sum();
    let sum_b: f64 = col.iter().map(|v| c2(*v)).sum();
    let total = c2(n);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-15 {
        return 1.0; // both partitions trivial
    }
    (sum_ij - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests;
