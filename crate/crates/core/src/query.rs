//! Structured model requests and replies.
//!
//! Backends receive the whole [`ModelQuery`] rather than a rendered string:
//! the HTTP backend renders it, while the scripted oracle acts directly on the
//! option order and identities.

use serde::{Deserialize, Serialize};

use crate::catalog::LabelId;
use crate::demos::Exemplar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    ReduceTopk,
    FullChoice,
    PairwiseChoice,
    SimilarityAnalysis,
    DifferenceAnalysis,
    PairwiseDecide,
    ExplanationGen,
}

impl QueryKind {
    pub fn is_pairwise(self) -> bool {
        matches!(
            self,
            QueryKind::PairwiseChoice
                | QueryKind::SimilarityAnalysis
                | QueryKind::DifferenceAnalysis
                | QueryKind::PairwiseDecide
        )
    }

    /// Kinds whose reply names one or more of the offered options.
    pub fn is_choice(self) -> bool {
        matches!(
            self,
            QueryKind::ReduceTopk
                | QueryKind::FullChoice
                | QueryKind::PairwiseChoice
                | QueryKind::PairwiseDecide
        )
    }
}

pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Sampling seed forwarded to the backend. Distinguishes otherwise
    /// identical requests (self-consistency votes, decision retries).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelQuery {
    pub kind: QueryKind,
    pub text: String,
    pub options: Vec<LabelId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    /// `Some` selects the few-shot variant of a template, even when empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demonstrations: Option<Vec<Exemplar>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thoughts: Vec<String>,
    #[serde(default)]
    pub cot: bool,
    #[serde(default)]
    pub decoding: Decoding,
}

impl ModelQuery {
    fn base(kind: QueryKind, text: &str, options: Vec<LabelId>) -> Self {
        ModelQuery {
            kind,
            text: text.to_string(),
            options,
            top_k: None,
            demonstrations: None,
            thoughts: Vec::new(),
            cot: false,
            decoding: Decoding::default(),
        }
    }

    pub fn reduce_topk(text: &str, options: Vec<LabelId>, top_k: usize) -> Self {
        let mut q = Self::base(QueryKind::ReduceTopk, text, options);
        q.top_k = Some(top_k);
        q
    }

    pub fn full_choice(
        text: &str,
        options: Vec<LabelId>,
        cot: bool,
        demonstrations: Option<Vec<Exemplar>>,
    ) -> Self {
        let mut q = Self::base(QueryKind::FullChoice, text, options);
        q.cot = cot;
        q.demonstrations = demonstrations;
        q
    }

    pub fn pairwise_choice(
        text: &str,
        pair: [LabelId; 2],
        cot: bool,
        demonstrations: Option<Vec<Exemplar>>,
    ) -> Self {
        let mut q = Self::base(QueryKind::PairwiseChoice, text, pair.to_vec());
        q.cot = cot;
        q.demonstrations = demonstrations;
        q
    }

    pub fn similarity(text: &str, pair: [LabelId; 2], demonstrations: Vec<Exemplar>) -> Self {
        let mut q = Self::base(QueryKind::SimilarityAnalysis, text, pair.to_vec());
        q.demonstrations = Some(demonstrations);
        q.cot = true;
        q
    }

    pub fn difference(
        text: &str,
        pair: [LabelId; 2],
        demonstrations: Vec<Exemplar>,
        shared: String,
    ) -> Self {
        let mut q = Self::similarity(text, pair, demonstrations);
        q.kind = QueryKind::DifferenceAnalysis;
        q.thoughts = vec![shared];
        q
    }

    pub fn decide(
        text: &str,
        pair: [LabelId; 2],
        demonstrations: Vec<Exemplar>,
        shared: String,
        contrast: String,
    ) -> Self {
        let mut q = Self::similarity(text, pair, demonstrations);
        q.kind = QueryKind::PairwiseDecide;
        q.thoughts = vec![shared, contrast];
        q
    }

    /// Asks for an explanation of why `text` carries `label`.
    pub fn explanation(text: &str, label: LabelId) -> Self {
        let mut q = Self::base(QueryKind::ExplanationGen, text, vec![label]);
        q.cot = true;
        q
    }

    pub fn with_decoding(mut self, decoding: Decoding) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidQuery(m.to_string()));
        if self.options.is_empty() {
            return bad("options must not be empty");
        }
        for (i, o) in self.options.iter().enumerate() {
            if self.options[..i].contains(o) {
                return Err(Error::InvalidQuery(format!("duplicate option `{o}`")));
            }
        }
        if self.kind.is_pairwise() && self.options.len() != 2 {
            return Err(Error::InvalidQuery(format!(
                "{:?} needs exactly 2 options, got {}",
                self.kind,
                self.options.len()
            )));
        }
        match self.kind {
            QueryKind::ReduceTopk if self.top_k.unwrap_or(0) == 0 => bad("reduce_topk needs top_k >= 1"),
            QueryKind::DifferenceAnalysis if self.thoughts.is_empty() => {
                bad("difference analysis needs the similarity analysis")
            }
            QueryKind::PairwiseDecide if self.thoughts.len() < 2 => {
                bad("decision needs both similarity and difference analyses")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReply {
    pub text: String,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
    pub backend_id: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> [LabelId; 2] {
        ["a".into(), "b".into()]
    }

    #[test]
    fn pairwise_kinds_need_two_options() {
        let mut q = ModelQuery::pairwise_choice("x", pair(), false, None);
        assert!(q.validate().is_ok());
        q.options.push("c".into());
        assert!(q.validate().is_err());
    }

    #[test]
    fn thought_prerequisites() {
        let mut q = ModelQuery::difference("x", pair(), vec![], "s".into());
        assert!(q.validate().is_ok());
        q.thoughts.clear();
        assert!(q.validate().is_err());
        let mut d = ModelQuery::decide("x", pair(), vec![], "s".into(), "d".into());
        assert!(d.validate().is_ok());
        d.thoughts.pop();
        assert!(d.validate().is_err());
    }

    #[test]
    fn topk_must_be_positive() {
        assert!(ModelQuery::reduce_topk("x", vec!["a".into()], 0).validate().is_err());
        assert!(ModelQuery::reduce_topk("x", vec![], 1).validate().is_err());
    }
}
