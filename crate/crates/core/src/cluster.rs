//! k-means clustering with k-means++ seeding.
//!
//! Rows are expected to be unit vectors, where squared Euclidean distance is
//! a monotone transform of cosine distance (`‖u − v‖² = 2(1 − u·v)`), so
//! Lloyd's iterations run on squared Euclidean distance directly.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::seed;

pub const MAX_ITERATIONS: usize = 100;
pub const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster index of each row, parallel to the input matrix.
    pub assignments: Vec<usize>,
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to assigned centroids after each iteration.
    pub objective_history: Vec<f64>,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(rows: &[Vec<f64>], k: usize, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    let n = rows.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![rows[first].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &rows[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().zip(&chosen).filter(|(_, &c)| !c).map(|(d, _)| d).sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = None;
            for i in (0..n).filter(|&i| !chosen[i]) {
                pick = Some(i);
                if target < d2[i] {
                    break;
                }
                target -= d2[i];
            }
            pick.expect("an unchosen row exists while k <= n")
        } else {
            // Every remaining row duplicates a centroid.
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.push(rows[pick].clone());
        for (i, r) in rows.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &rows[pick]));
        }
    }
    centroids
}

/// Moves the farthest point of any multi-member cluster into each empty one.
fn repair_empty(rows: &[Vec<f64>], assignments: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignments.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let victim = (0..rows.len())
            .filter(|&i| sizes[assignments[i]] > 1)
            .map(|i| (i, sq_dist(&rows[i], &centroids[assignments[i]])))
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            })
            .map(|(i, _)| i)
            .expect("k <= n leaves a cluster with two or more members");
        assignments[victim] = empty;
        centroids[empty] = rows[victim].clone();
    }
}

/// Lloyd's algorithm from k-means++ seeds. Stops after [`MAX_ITERATIONS`] or
/// once no centroid moves more than [`SHIFT_TOLERANCE`]. Deterministic in
/// `seed`; no cluster is left empty.
pub fn kmeans(x: &EmbeddingMatrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let rows = &x.rows;
    let n = rows.len();
    if k == 0 {
        return Err(Error::Cluster("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Cluster(format!("k = {k} exceeds {n} rows")));
    }
    let mut rng = seed::rng(seed);
    let mut centroids = plus_plus_seeds(rows, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut history = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        for (i, r) in rows.iter().enumerate() {
            assignments[i] = nearest(r, &centroids).0;
        }
        repair_empty(rows, &mut assignments, &mut centroids);

        let mut sums = vec![vec![0.0; x.dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &c) in rows.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(r) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let updated: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        history.push(
            rows.iter()
                .zip(&assignments)
                .map(|(r, &c)| sq_dist(r, &centroids[c]))
                .sum(),
        );
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }

    Ok(ClusterAssignment {
        assignments,
        k,
        centroids,
        objective_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: Vec<Vec<f64>>) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("p{i}")).collect();
        EmbeddingMatrix::new(ids, rows).unwrap()
    }

    fn blobs() -> EmbeddingMatrix {
        let mut rows = Vec::new();
        for i in 0..5 {
            rows.push(vec![0.0 + 0.1 * i as f64, 0.05 * i as f64]);
        }
        for i in 0..5 {
            rows.push(vec![10.0 - 0.1 * i as f64, 10.0 + 0.07 * i as f64]);
        }
        matrix(rows)
    }

    /// Brute force over all 2-partitions of 10 points.
    fn best_two_partition(x: &EmbeddingMatrix) -> Vec<usize> {
        let n = x.len();
        let cost = |mask: u32| -> f64 {
            let mut total = 0.0;
            for side in [0u32, 1] {
                let members: Vec<&Vec<f64>> =
                    (0..n).filter(|&i| (mask >> i) & 1 == side).map(|i| &x.rows[i]).collect();
                if members.is_empty() {
                    return f64::INFINITY;
                }
                let dim = members[0].len();
                let mean: Vec<f64> = (0..dim)
                    .map(|d| members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64)
                    .collect();
                total += members
                    .iter()
                    .map(|m| m.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                    .sum::<f64>();
            }
            total
        };
        let best = (1..(1u32 << n) - 1)
            .min_by(|&a, &b| cost(a).partial_cmp(&cost(b)).unwrap())
            .unwrap();
        (0..n).map(|i| ((best >> i) & 1) as usize).collect()
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn separated_blobs_match_brute_force() {
        let x = blobs();
        let oracle = best_two_partition(&x);
        for seed in 0..10 {
            let got = kmeans(&x, 2, seed).unwrap();
            assert!(same_partition(&got.assignments, &oracle));
        }
    }

    #[test]
    fn k_equal_rows_gives_singletons() {
        let x = blobs();
        let got = kmeans(&x, 10, 3).unwrap();
        assert_eq!(got.sizes(), vec![1; 10]);
    }

    #[test]
    fn duplicates_still_fill_every_cluster() {
        let x = matrix(vec![vec![1.0, 0.0]; 4]);
        let got = kmeans(&x, 4, 0).unwrap();
        assert_eq!(got.sizes(), vec![1; 4]);
    }

    #[test]
    fn too_many_clusters() {
        assert!(kmeans(&blobs(), 11, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let x = blobs();
        assert_eq!(kmeans(&x, 3, 8).unwrap(), kmeans(&x, 3, 8).unwrap());
    }

    proptest! {
        #[test]
        fn objective_never_increases(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..40),
            k in 1usize..6,
            seed in any::<u64>(),
        ) {
            let k = k.min(pts.len());
            let got = kmeans(&matrix(pts), k, seed).unwrap();
            for w in got.objective_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", got.objective_history);
            }
            prop_assert!(got.sizes().iter().all(|&s| s > 0));
        }
    }
}
