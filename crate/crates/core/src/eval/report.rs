//! Report records and flat CSV output.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{mean_std, CallAccounting};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation over repeats.
    pub std: f64,
    pub per_repeat: Vec<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        let (mean, std) = mean_std(values)?;
        Ok(Summary {
            mean,
            std,
            per_repeat: values.to_vec(),
        })
    }
}

/// One repeat of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub repeat: usize,
    pub seed: u64,
    pub instances: usize,
    pub accuracy: Option<f64>,
    pub hit_at_k: Option<f64>,
    pub reduction_calls: u64,
    pub comparison_calls: u64,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub command: String,
    pub strategy: Option<String>,
    pub method: Option<String>,
    pub k: usize,
    pub seeds: Vec<u64>,
    pub rows: Vec<AccuracyRow>,
    pub accuracy: Option<Summary>,
    pub hit_at_k: Option<Summary>,
    pub reduction_calls: u64,
    pub comparison_calls: u64,
    pub total_calls: u64,
    /// Sum of recorded reply latencies.
    pub wall_time_ms: f64,
    pub call_accounting: Vec<CallAccounting>,
    /// The configuration that produced this report.
    pub config: serde_json::Value,
}

/// Writes `rows` as a CSV file with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteAccuracyRow {
    pub dataset: String,
    pub silhouette: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteAccuracy {
    pub rows: Vec<SilhouetteAccuracyRow>,
    /// Pearson correlation across datasets; `None` with fewer than two rows
    /// or zero variance.
    pub pearson: Option<f64>,
}

/// Relates per-dataset boundary clarity to classification accuracy.
pub fn silhouette_accuracy(rows: Vec<SilhouetteAccuracyRow>) -> SilhouetteAccuracy {
    let n = rows.len() as f64;
    let pearson = if rows.len() < 2 {
        None
    } else {
        let mx = rows.iter().map(|r| r.silhouette).sum::<f64>() / n;
        let my = rows.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for r in &rows {
            let (dx, dy) = (r.silhouette - mx, r.accuracy - my);
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
    };
    SilhouetteAccuracy { rows, pearson }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_of_linear_rows() {
        let rows = (0..4)
            .map(|i| SilhouetteAccuracyRow {
                dataset: format!("d{i}"),
                silhouette: i as f64 * 0.1,
                accuracy: 0.5 + i as f64 * 0.05,
            })
            .collect();
        let r = silhouette_accuracy(rows).pearson.unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(
            &p,
            &[SilhouetteAccuracyRow {
                dataset: "x".into(),
                silhouette: 0.5,
                accuracy: 1.0,
            }],
        )
        .unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "dataset,silhouette,accuracy\nx,0.5,1.0\n");
    }
}
