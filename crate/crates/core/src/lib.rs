//! Two-stage label selection for text classification with many labels.
//!
//! A reduction stage asks a model to shortlist the `N` most plausible labels
//! out of a large catalogue. A comparison stage then picks one label from the
//! shortlist, either through a winner-stays tournament of contrastive pairwise
//! comparisons or through one of the baseline prompting methods.
//!
//! All model traffic goes through a [`Gateway`], which caches replies on disk
//! and counts calls. The [`ScriptedOracle`] backend answers deterministically
//! from a calibrated noise model, so every experiment runs offline.

pub mod arena;
pub mod arrange;
pub mod catalog;
pub mod cluster;
pub mod dataset;
pub mod demos;
pub mod embed;
pub mod eval;
pub mod experiment;
pub mod error;
pub mod gateway;
pub mod parse;
pub mod prompt;
pub mod query;
pub mod reduce;
pub mod seed;
pub mod silhouette;

pub use catalog::{Label, LabelCatalog, LabelId};
pub use dataset::{load_dataset, save_dataset, Instance};
pub use demos::{DemonstrationStore, Exemplar};
pub use error::{Error, Result};
pub use gateway::{Backend, CallStats, Gateway, ScriptedOracle, ScriptedOracleConfig};
pub use query::{Decoding, ModelQuery, ModelReply, QueryKind};
pub use arena::{ComparisonConfig, ComparisonTranscript, Method};
pub use reduce::{ReductionConfig, ReductionResult, Strategy};
