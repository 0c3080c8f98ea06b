//! Option arrangement: the order in which labels are shown to a model.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::catalog::{LabelCatalog, LabelId};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "position")]
pub enum ArrangementMode {
    AsIs,
    SeededShuffle,
    /// Gold label pinned at this 0-based index, the rest seeded-shuffled.
    GoldAtPosition(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrangementSpec {
    #[serde(flatten)]
    pub mode: ArrangementMode,
    pub seed: u64,
}

impl ArrangementSpec {
    pub fn as_is() -> Self {
        ArrangementSpec {
            mode: ArrangementMode::AsIs,
            seed: 0,
        }
    }

    pub fn shuffled(seed: u64) -> Self {
        ArrangementSpec {
            mode: ArrangementMode::SeededShuffle,
            seed,
        }
    }

    pub fn gold_at(position: usize, seed: u64) -> Self {
        ArrangementSpec {
            mode: ArrangementMode::GoldAtPosition(position),
            seed,
        }
    }
}

/// Returns the catalog's labels permuted according to `spec`.
pub fn arrange(catalog: &LabelCatalog, spec: &ArrangementSpec, gold: &LabelId) -> Result<Vec<LabelId>> {
    catalog.require(gold)?;
    arrange_ids(&catalog.ids(), spec, Some(gold))
}

/// Same as [`arrange`] over an arbitrary duplicate-free list.
pub fn arrange_ids(
    ids: &[LabelId],
    spec: &ArrangementSpec,
    gold: Option<&LabelId>,
) -> Result<Vec<LabelId>> {
    let mut rng = seed::rng(spec.seed);
    match spec.mode {
        ArrangementMode::AsIs => Ok(ids.to_vec()),
        ArrangementMode::SeededShuffle => {
            let mut out = ids.to_vec();
            out.shuffle(&mut rng);
            Ok(out)
        }
        ArrangementMode::GoldAtPosition(p) => {
            if p >= ids.len() {
                return Err(Error::PositionOutOfRange {
                    position: p,
                    len: ids.len(),
                });
            }
            let gold = gold.ok_or_else(|| {
                Error::InvalidQuery("gold-at-position needs a gold label".into())
            })?;
            let mut rest: Vec<LabelId> = ids.iter().filter(|l| *l != gold).cloned().collect();
            if rest.len() == ids.len() {
                return Err(Error::UnknownLabel(gold.clone()));
            }
            rest.shuffle(&mut rng);
            rest.insert(p, gold.clone());
            Ok(rest)
        }
    }
}
