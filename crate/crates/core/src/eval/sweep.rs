//! Fixed-position bias sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{confusion, token_bias_scores, TokenBias};
use crate::arrange::ArrangementSpec;
use crate::catalog::{LabelCatalog, LabelId};
use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    pub position: usize,
    /// Accuracy pooled over all seeds.
    pub accuracy: f64,
    pub per_seed: Vec<f64>,
    /// `(accuracy − baseline) / baseline`; `None` when the baseline is 0.
    pub change_rate: Option<f64>,
    /// Binomial standard error of `accuracy`.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub seeds: Vec<u64>,
    pub instances: usize,
    /// Accuracy with options in seeded-shuffled order.
    pub baseline_accuracy: f64,
    pub baseline_per_seed: Vec<f64>,
    pub positions: Vec<PositionRow>,
    /// Token bias of the baseline predictions.
    pub token_bias: Vec<TokenBias>,
}

impl BiasReport {
    /// Position with the largest change rate.
    pub fn max_change_position(&self) -> Option<usize> {
        self.positions
            .iter()
            .filter_map(|r| r.change_rate.map(|c| (r.position, c)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(p, _)| p)
    }
}

/// Arrangement seed for one instance under one run seed; identical across
/// the baseline and every fixed-position run.
fn arrangement_seed(run_seed: u64, instance: &Instance) -> u64 {
    seed::derive(run_seed, &[instance.id as u64, 0xA11])
}

/// Runs `predict` over every instance and seed, first with shuffled options
/// and then with gold pinned to each position in `positions`. The non-gold
/// options of a pinned run are shuffled with the same per-instance seed as
/// the baseline.
pub fn position_bias_sweep<F>(
    instances: &[Instance],
    catalog: &LabelCatalog,
    positions: &[usize],
    seeds: &[u64],
    predict: F,
) -> Result<BiasReport>
where
    F: Fn(&Instance, &ArrangementSpec, u64) -> Result<Option<LabelId>> + Sync,
{
    if instances.is_empty() || seeds.is_empty() {
        return Err(Error::Metric("sweep needs instances and seeds".into()));
    }
    if let Some(&p) = positions.iter().find(|&&p| p >= catalog.len()) {
        return Err(Error::PositionOutOfRange {
            position: p,
            len: catalog.len(),
        });
    }
    let run = |make: &(dyn Fn(u64) -> ArrangementSpec + Sync), s: u64| -> Result<Vec<Option<LabelId>>> {
        instances
            .par_iter()
            .map(|inst| predict(inst, &make(arrangement_seed(s, inst)), s))
            .collect()
    };
    let golds: Vec<LabelId> = instances.iter().map(|i| i.gold.clone()).collect();
    let acc = |preds: &[Option<LabelId>]| super::accuracy(preds, &golds);

    let mut baseline_per_seed = Vec::with_capacity(seeds.len());
    let mut all_preds = Vec::new();
    let mut all_golds = Vec::new();
    for &s in seeds {
        let preds = run(&ArrangementSpec::shuffled, s)?;
        baseline_per_seed.push(acc(&preds)?);
        all_golds.extend(golds.iter().cloned());
        all_preds.extend(preds);
    }
    let baseline = super::accuracy(&all_preds, &all_golds)?;
    let token_bias = token_bias_scores(&confusion(&all_preds, &all_golds, catalog)?)?;

    let trials = (instances.len() * seeds.len()) as f64;
    let mut rows = Vec::with_capacity(positions.len());
    for &p in positions {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &s in seeds {
            let preds = run(&|sd| ArrangementSpec::gold_at(p, sd), s)?;
            per_seed.push(acc(&preds)?);
        }
        let accuracy = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        rows.push(PositionRow {
            position: p,
            accuracy,
            change_rate: (baseline > 0.0).then(|| (accuracy - baseline) / baseline),
            std_error: (accuracy * (1.0 - accuracy) / trials).sqrt(),
            per_seed,
        });
    }
    Ok(BiasReport {
        seeds: seeds.to_vec(),
        instances: instances.len(),
        baseline_accuracy: baseline,
        baseline_per_seed,
        positions: rows,
        token_bias,
    })
}
