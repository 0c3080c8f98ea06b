//! Precision margins from an external base classifier, and low-margin
//! ("challenge") subset selection.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{LabelCatalog, LabelId};
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-6;

/// Gap between the largest and second-largest probability, floored at 0.
/// A single-class vector has margin equal to its only entry.
pub fn margin(probs: &[f64]) -> f64 {
    let (mut top, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in probs {
        if p > top {
            second = top;
            top = p;
        } else if p > second {
            second = p;
        }
    }
    if second == f64::NEG_INFINITY {
        second = 0.0;
    }
    (top - second).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRecord {
    pub text: String,
    /// Probabilities aligned to catalog order.
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelId>,
    #[serde(skip_deserializing, default)]
    pub margin: f64,
}

/// Reads a JSON-Lines margin file, one `{text, probs, label?}` per line,
/// checking each vector against the catalog size.
pub fn load_margins(path: impl AsRef<Path>, catalog: &LabelCatalog) -> Result<Vec<MarginRecord>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: String| Error::Record {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: MarginRecord = serde_json::from_str(line).map_err(|e| bad(n, e.to_string()))?;
        if rec.probs.len() != catalog.len() {
            return Err(bad(
                n,
                format!("{} probabilities for {} labels", rec.probs.len(), catalog.len()),
            ));
        }
        if rec.probs.iter().any(|p| p.is_nan() || *p < 0.0) {
            return Err(bad(n, "negative or non-numeric probability".into()));
        }
        let sum: f64 = rec.probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(bad(n, format!("probabilities sum to {sum}")));
        }
        if let Some(label) = &rec.label {
            if !catalog.contains(label) {
                return Err(bad(n, format!("unknown label `{label}`")));
            }
        }
        rec.margin = margin(&rec.probs);
        out.push(rec);
    }
    if out.is_empty() {
        return Err(bad(0, "no margin records".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSize {
    Count(usize),
    Fraction(f64),
}

/// Indices of the lowest-margin records, ascending by margin; ties keep
/// input order. Oversized requests are clamped.
pub fn challenge_sample(records: &[MarginRecord], size: SampleSize) -> Result<Vec<usize>> {
    let want = match size {
        SampleSize::Count(n) => n,
        SampleSize::Fraction(f) if (0.0..=1.0).contains(&f) => (f * records.len() as f64).round() as usize,
        SampleSize::Fraction(f) => return Err(Error::Metric(format!("fraction {f} outside [0, 1]"))),
    };
    if want > records.len() {
        tracing::warn!(want, available = records.len(), "challenge sample clamped");
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].margin.total_cmp(&records[b].margin));
    order.truncate(want.min(records.len()));
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_arithmetic() {
        assert!((margin(&[0.6, 0.3, 0.1]) - 0.3).abs() < 1e-15);
        assert_eq!(margin(&[0.25; 4]), 0.0);
        assert_eq!(margin(&[0.1, 0.9]), 0.8);
    }

    fn rec(m: f64) -> MarginRecord {
        MarginRecord {
            text: String::new(),
            probs: vec![],
            label: None,
            margin: m,
        }
    }

    #[test]
    fn stable_ties_and_clamp() {
        let r = vec![rec(0.5), rec(0.1), rec(0.1), rec(0.0)];
        assert_eq!(challenge_sample(&r, SampleSize::Count(3)).unwrap(), vec![3, 1, 2]);
        assert_eq!(challenge_sample(&r, SampleSize::Count(9)).unwrap().len(), 4);
        assert_eq!(challenge_sample(&r, SampleSize::Fraction(0.5)).unwrap(), vec![3, 1]);
    }

    #[test]
    fn misaligned_line_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        fs::write(&p, "{\"text\":\"a\",\"probs\":[0.5,0.5]}\n{\"text\":\"b\",\"probs\":[1.0]}\n").unwrap();
        let cat = LabelCatalog::new(["x", "y"]).unwrap();
        match load_margins(&p, &cat) {
            Err(Error::Record { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
