//! Per-label demonstration exemplars drawn from a training split.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::catalog::{LabelCatalog, LabelId};
use crate::dataset::Instance;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub text: String,
    pub label: LabelId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

impl Exemplar {
    pub fn new(text: impl Into<String>, label: impl Into<LabelId>) -> Self {
        Exemplar {
            text: text.into(),
            label: label.into(),
            explanation: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemonstrationStore {
    by_label: BTreeMap<LabelId, Vec<Exemplar>>,
}

impl DemonstrationStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a store from training instances. With `capacity`, keeps at most
    /// that many exemplars per label, picked without replacement under `seed`.
    pub fn from_instances(
        train: &[Instance],
        catalog: &LabelCatalog,
        capacity: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let mut by_label: BTreeMap<LabelId, Vec<Exemplar>> = BTreeMap::new();
        for inst in train {
            catalog.require(&inst.gold)?;
            by_label
                .entry(inst.gold.clone())
                .or_default()
                .push(Exemplar::new(inst.text.clone(), inst.gold.clone()));
        }
        if let Some(cap) = capacity {
            for (label, list) in by_label.iter_mut() {
                if list.len() > cap {
                    let mut rng = seed::rng(seed::derive_str(seed, label.as_str()));
                    let mut picked = index::sample(&mut rng, list.len(), cap).into_vec();
                    picked.sort_unstable();
                    *list = picked.into_iter().map(|i| list[i].clone()).collect();
                }
            }
        }
        Ok(DemonstrationStore { by_label })
    }

    pub fn insert(&mut self, exemplar: Exemplar) {
        self.by_label
            .entry(exemplar.label.clone())
            .or_default()
            .push(exemplar);
    }

    pub fn exemplars(&self, label: &LabelId) -> &[Exemplar] {
        self.by_label.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn labels(&self) -> impl Iterator<Item = &LabelId> {
        self.by_label.keys()
    }

    pub fn len(&self) -> usize {
        self.by_label.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Exemplar> {
        self.by_label.values().flatten()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Exemplar> {
        self.by_label.values_mut().flatten()
    }

    /// Draws `min(m, available)` distinct exemplars of `label`, never
    /// returning one whose text equals `query_text`. Deterministic in `seed`;
    /// the result keeps store order.
    pub fn sample_demonstrations(
        &self,
        label: &LabelId,
        m: usize,
        seed: u64,
        query_text: &str,
    ) -> Result<Vec<Exemplar>> {
        let pool: Vec<&Exemplar> = self
            .exemplars(label)
            .iter()
            .filter(|e| e.text != query_text)
            .collect();
        if pool.is_empty() {
            return Err(Error::NoDemonstrations(label.clone()));
        }
        let take = m.min(pool.len());
        let mut rng = seed::rng(seed::derive_str(seed, label.as_str()));
        let mut picked = index::sample(&mut rng, pool.len(), take).into_vec();
        picked.sort_unstable();
        Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&raw)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(self)?;
        fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
    }
}
