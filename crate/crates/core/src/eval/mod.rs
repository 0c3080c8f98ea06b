//! Metrics and bias diagnostics.
//!
//! Every function here is a pure function of its inputs.

mod margin;
mod report;
mod sweep;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use margin::{challenge_sample, load_margins, margin, MarginRecord, SampleSize};
pub use report::{
    silhouette_accuracy, write_csv, AccuracyRow, EvalReport, SilhouetteAccuracy, SilhouetteAccuracyRow, Summary,
};
pub use sweep::{position_bias_sweep, BiasReport, PositionRow};

use crate::catalog::{LabelCatalog, LabelId};
use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Metric(format!("{a} predictions for {b} gold labels")));
    }
    if a == 0 {
        return Err(Error::Metric("no instances".into()));
    }
    Ok(())
}

/// Exact-match fraction; `None` (an abstain) counts as wrong.
pub fn accuracy(predictions: &[Option<LabelId>], golds: &[LabelId]) -> Result<f64> {
    check_lengths(predictions.len(), golds.len())?;
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| p.as_ref() == Some(*g))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Fraction of instances whose gold label is in its reduced set.
pub fn hit_at_k(reduced: &[Vec<LabelId>], golds: &[LabelId], k: usize) -> Result<f64> {
    check_lengths(reduced.len(), golds.len())?;
    if let Some(big) = reduced.iter().find(|r| r.len() > k) {
        return Err(Error::Metric(format!("reduced set of {} exceeds k = {k}", big.len())));
    }
    let hits = reduced.iter().zip(golds).filter(|(r, g)| r.contains(g)).count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Counts indexed `[gold][predicted]` in catalog order; the extra last
/// column counts abstains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<LabelId>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn abstain_column(&self) -> usize {
        self.labels.len()
    }

    pub fn row_sum(&self, gold: usize) -> u64 {
        self.counts[gold].iter().sum()
    }

    /// Predictions of label `predicted` across all gold rows.
    pub fn column_sum(&self, predicted: usize) -> u64 {
        self.counts.iter().map(|row| row[predicted]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion(
    predictions: &[Option<LabelId>],
    golds: &[LabelId],
    catalog: &LabelCatalog,
) -> Result<ConfusionMatrix> {
    check_lengths(predictions.len(), golds.len())?;
    let n = catalog.len();
    let mut counts = vec![vec![0u64; n + 1]; n];
    for (p, g) in predictions.iter().zip(golds) {
        let row = catalog.require(g)?;
        let col = match p {
            Some(p) => catalog.require(p)?,
            None => n,
        };
        counts[row][col] += 1;
    }
    Ok(ConfusionMatrix {
        labels: catalog.ids(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenBias {
    pub label: LabelId,
    /// Share of all instances predicted as this label.
    pub predicted_marginal: f64,
    /// Share of all instances whose gold is this label.
    pub gold_marginal: f64,
    /// `predicted_marginal / gold_marginal`; `None` when the gold marginal
    /// is zero (see `infinite`).
    pub ratio: Option<f64>,
    /// Predicted but never gold.
    pub infinite: bool,
}

/// Predicted-to-gold marginal ratio per label, largest first. Labels never
/// predicted and never gold are left out.
pub fn token_bias_scores(cm: &ConfusionMatrix) -> Result<Vec<TokenBias>> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Metric("empty confusion matrix".into()));
    }
    let total = total as f64;
    let mut out: Vec<TokenBias> = (0..cm.labels.len())
        .filter_map(|i| {
            let predicted = cm.column_sum(i) as f64 / total;
            let gold = cm.row_sum(i) as f64 / total;
            if predicted == 0.0 && gold == 0.0 {
                return None;
            }
            Some(TokenBias {
                label: cm.labels[i].clone(),
                predicted_marginal: predicted,
                gold_marginal: gold,
                ratio: (gold > 0.0).then(|| predicted / gold),
                infinite: gold == 0.0,
            })
        })
        .collect();
    let key = |t: &TokenBias| if t.infinite { f64::INFINITY } else { t.ratio.unwrap_or(0.0) };
    out.sort_by(|a, b| key(b).total_cmp(&key(a)));
    Ok(out)
}

/// Arithmetic mean and sample (n − 1) standard deviation; the deviation is 0
/// for a single value.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Metric("no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Calls and latency of one processed item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub method: String,
    pub calls: u64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallAccounting {
    pub method: String,
    pub items: usize,
    pub mean_calls: f64,
    pub mean_latency_per_call_ms: f64,
    /// `mean latency per call × mean calls × 1000`.
    pub time_per_1000_items_ms: f64,
}

/// Per-method averages, in order of first appearance.
pub fn call_accounting(records: &[CallRecord]) -> Result<Vec<CallAccounting>> {
    if records.is_empty() {
        return Err(Error::Metric("no transcripts to account".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut sums: HashMap<&str, (usize, u64, f64)> = HashMap::new();
    for r in records {
        let e = sums.entry(&r.method).or_insert_with(|| {
            order.push(&r.method);
            (0, 0, 0.0)
        });
        e.0 += 1;
        e.1 += r.calls;
        e.2 += r.latency_ms;
    }
    Ok(order
        .into_iter()
        .map(|m| {
            let (items, calls, latency) = sums[m];
            let mean_calls = calls as f64 / items as f64;
            let per_call = if calls == 0 { 0.0 } else { latency / calls as f64 };
            CallAccounting {
                method: m.to_string(),
                items,
                mean_calls,
                mean_latency_per_call_ms: per_call,
                time_per_1000_items_ms: per_call * mean_calls * 1000.0,
            }
        })
        .collect())
}
