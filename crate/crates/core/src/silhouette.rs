//! Silhouette analysis of labelled point sets.
//!
//! For point `i` with class `C`: `a(i)` is the mean distance to the other
//! members of `C`, `b(i)` the smallest mean distance to the members of any
//! other class, and `s(i) = (b(i) − a(i)) / max(a(i), b(i))`. The overall
//! score `S` is the arithmetic mean of `s(i)`. Points alone in their class
//! score 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    /// `1 − cos(u, v)`.
    #[default]
    Cosine,
    Euclidean,
}

impl Distance {
    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => crate::cluster::sq_dist(a, b).sqrt(),
            Distance::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub scores: Vec<f64>,
    pub mean: f64,
}

/// Silhouette of `x` partitioned by `classes` (parallel to the rows).
pub fn silhouette<C: Ord>(x: &EmbeddingMatrix, classes: &[C], distance: Distance) -> Result<SilhouetteReport> {
    let n = x.len();
    if classes.len() != n {
        return Err(Error::Metric(format!("{} classes for {n} rows", classes.len())));
    }
    let mut ids: BTreeMap<&C, usize> = BTreeMap::new();
    for c in classes {
        let next = ids.len();
        ids.entry(c).or_insert(next);
    }
    let k = ids.len();
    if k < 2 {
        return Err(Error::Metric("silhouette needs at least two classes".into()));
    }
    let class: Vec<usize> = classes.iter().map(|c| ids[c]).collect();
    let mut size = vec![0usize; k];
    for &c in &class {
        size[c] += 1;
    }

    let mut scores = Vec::with_capacity(n);
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[class[j]] += distance.between(&x.rows[i], &x.rows[j]);
            }
        }
        let own = class[i];
        if size[own] == 1 {
            scores.push(0.0);
            continue;
        }
        let a = sums[own] / (size[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / size[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        scores.push(if denom > 0.0 { (b - a) / denom } else { 0.0 });
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    Ok(SilhouetteReport { scores, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("p{i}")).collect();
        EmbeddingMatrix::new(ids, rows).unwrap()
    }

    #[test]
    fn one_dimensional_fixture() {
        let x = matrix(vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]]);
        let r = silhouette(&x, &["A", "A", "B", "B"], Distance::Euclidean).unwrap();
        let expect = [19.0 / 21.0, 17.0 / 19.0, 17.0 / 19.0, 19.0 / 21.0];
        for (got, want) in r.scores.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((r.mean - 359.0 / 399.0).abs() < 1e-15);
    }

    #[test]
    fn identical_classes_score_at_most_zero() {
        let x = matrix(vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]]);
        let r = silhouette(&x, &[0, 0, 1, 1], Distance::Euclidean).unwrap();
        assert!(r.mean <= 0.0);
    }

    #[test]
    fn orthogonal_classes_are_well_separated() {
        let x = matrix(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.99, 0.01, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.98, 0.02],
            vec![0.0, 0.0, 1.0],
            vec![0.01, 0.0, 0.99],
        ]);
        let r = silhouette(&x, &[0, 0, 1, 1, 2, 2], Distance::Cosine).unwrap();
        assert!(r.mean > 0.5);
    }

    #[test]
    fn singleton_scores_zero_and_single_class_errors() {
        let x = matrix(vec![vec![0.0], vec![1.0], vec![5.0]]);
        let r = silhouette(&x, &[0, 0, 1], Distance::Euclidean).unwrap();
        assert_eq!(r.scores[2], 0.0);
        assert!(silhouette(&x, &[0, 0, 0], Distance::Euclidean).is_err());
    }
}
