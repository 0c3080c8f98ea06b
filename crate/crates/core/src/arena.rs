//! Stage two: choosing one label from the reduced candidates.
//!
//! Pairwise methods run a winner-stays tournament: the first two candidates
//! meet, the winner returns to the front of the pool and meets the next one,
//! so `|R| − 1` comparisons decide the final label. The contrastive method
//! spends three chained calls per comparison (shared aspects, contrasting
//! points, decision); the plain pairwise baselines spend one. Full-option
//! baselines ask once over the whole list.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::catalog::LabelId;
use crate::demos::{DemonstrationStore, Exemplar};
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::parse::parse_label_choice;
use crate::prompt::fit_demonstrations;
use crate::query::{Decoding, ModelQuery};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FullZs,
    FullZsCot,
    FullFs,
    FullFsCot,
    PairZs,
    PairZsCot,
    PairFs,
    PairFsCot,
    #[default]
    PcCot,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::FullZs,
        Method::FullZsCot,
        Method::FullFs,
        Method::FullFsCot,
        Method::PairZs,
        Method::PairZsCot,
        Method::PairFs,
        Method::PairFsCot,
        Method::PcCot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FullZs => "full_zs",
            Method::FullZsCot => "full_zs_cot",
            Method::FullFs => "full_fs",
            Method::FullFsCot => "full_fs_cot",
            Method::PairZs => "pair_zs",
            Method::PairZsCot => "pair_zs_cot",
            Method::PairFs => "pair_fs",
            Method::PairFsCot => "pair_fs_cot",
            Method::PcCot => "pc_cot",
        }
    }

    pub fn is_full_option(self) -> bool {
        matches!(self, Method::FullZs | Method::FullZsCot | Method::FullFs | Method::FullFsCot)
    }

    pub fn few_shot(self) -> bool {
        matches!(
            self,
            Method::FullFs | Method::FullFsCot | Method::PairFs | Method::PairFsCot | Method::PcCot
        )
    }

    pub fn cot(self) -> bool {
        matches!(
            self,
            Method::FullZsCot | Method::FullFsCot | Method::PairZsCot | Method::PairFsCot | Method::PcCot
        )
    }

    /// Whether demonstrations need generated explanations.
    pub fn needs_explanations(self) -> bool {
        matches!(self, Method::FullFsCot | Method::PairFsCot)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(vec![format!("unknown method `{s}`")]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairOrder {
    /// Candidates enter in reduction rank order.
    #[default]
    ReductionRankFifo,
    SeededShuffle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparisonConfig {
    pub method: Method,
    /// Demonstrations per label.
    pub shots: usize,
    pub pair_order: PairOrder,
    /// Flip a seeded coin for which candidate fills the first slot.
    pub randomize_pair_positions: bool,
    /// Prompt budget in approximate tokens; demonstrations are dropped to fit.
    pub context_tokens: Option<usize>,
    pub seed: u64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            method: Method::PcCot,
            shots: 3,
            pair_order: PairOrder::ReductionRankFifo,
            randomize_pair_positions: true,
            context_tokens: Some(4096),
            seed: 0,
        }
    }
}

/// One comparison of a tournament.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub label1: LabelId,
    pub label2: LabelId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<String>,
    /// Raw decision replies, including a retry if one happened.
    pub replies: Vec<String>,
    pub verdict: LabelId,
    /// The verdict fell back to the higher-ranked candidate after unparseable
    /// replies.
    #[serde(default)]
    pub defaulted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTranscript {
    pub text: String,
    pub method: Method,
    pub candidates: Vec<LabelId>,
    pub pairs: Vec<PairRecord>,
    /// Raw reply of a full-option call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    /// `None` when a full-option reply named no candidate (an abstain).
    pub final_label: Option<LabelId>,
    pub calls: u64,
    pub latency_ms: f64,
}

/// Dispatches on `config.method`.
pub fn compare(
    text: &str,
    candidates: &[LabelId],
    store: &DemonstrationStore,
    config: &ComparisonConfig,
    gateway: &Gateway,
) -> Result<ComparisonTranscript> {
    match config.method {
        Method::PcCot => run_pc_cot(text, candidates, store, config, gateway),
        m if m.is_full_option() => run_full_option_baseline(text, candidates, store, config, gateway),
        _ => run_pairwise_baseline(text, candidates, store, config, gateway),
    }
}

fn demos_for(
    store: &DemonstrationStore,
    labels: &[LabelId],
    m: usize,
    seed: u64,
    text: &str,
) -> Result<Vec<Exemplar>> {
    let mut out = Vec::with_capacity(labels.len() * m);
    if m == 0 {
        return Ok(out);
    }
    for label in labels {
        out.extend(store.sample_demonstrations(label, m, seed, text)?);
    }
    Ok(out)
}

fn fit(query: ModelQuery, config: &ComparisonConfig) -> Result<ModelQuery> {
    match config.context_tokens {
        Some(budget) if query.demonstrations.is_some() => fit_demonstrations(query, budget),
        _ => Ok(query),
    }
}

struct Bracket {
    pool: VecDeque<LabelId>,
    rank: Vec<LabelId>,
}

impl Bracket {
    fn new(candidates: &[LabelId], config: &ComparisonConfig) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidQuery("no candidates to compare".into()));
        }
        let mut order = candidates.to_vec();
        if config.pair_order == PairOrder::SeededShuffle {
            order.shuffle(&mut seed::rng(seed::derive(config.seed, &[0x5eed])));
        }
        Ok(Bracket {
            pool: order.into(),
            rank: candidates.to_vec(),
        })
    }

    /// Next pair in slot order, or `None` when one candidate is left.
    fn next_pair(&mut self, round: u64, config: &ComparisonConfig) -> Option<[LabelId; 2]> {
        if self.pool.len() < 2 {
            return None;
        }
        let a = self.pool.pop_front().expect("len >= 2");
        let b = self.pool.pop_front().expect("len >= 2");
        let flip = config.randomize_pair_positions
            && seed::rng(seed::derive(config.seed, &[round, 0xF11B])).gen_bool(0.5);
        Some(if flip { [b, a] } else { [a, b] })
    }

    fn higher_ranked(&self, pair: &[LabelId; 2]) -> LabelId {
        let pos = |l: &LabelId| self.rank.iter().position(|r| r == l).unwrap_or(usize::MAX);
        if pos(&pair[0]) <= pos(&pair[1]) {
            pair[0].clone()
        } else {
            pair[1].clone()
        }
    }

    fn winner(&mut self, label: LabelId) {
        self.pool.push_front(label);
    }

    fn champion(mut self) -> LabelId {
        self.pool.pop_front().expect("bracket never empties")
    }
}

/// Issues `query`, retrying once under a different sampling seed when the
/// reply names neither candidate; then falls back to the higher-ranked one.
fn decide(
    query: ModelQuery,
    pair: &[LabelId; 2],
    bracket: &Bracket,
    retry_seed: u64,
    gateway: &Gateway,
    calls: &mut u64,
    latency: &mut f64,
) -> Result<(LabelId, Vec<String>, bool)> {
    let mut replies = Vec::with_capacity(1);
    let mut q = query;
    for attempt in 0..2 {
        if attempt == 1 {
            q.decoding = Decoding {
                seed: Some(retry_seed),
                ..q.decoding
            };
        }
        let reply = gateway.complete(&q)?;
        *calls += 1;
        *latency += reply.latency_ms;
        let verdict = parse_label_choice(&reply.text, pair);
        replies.push(reply.text);
        if let Some(v) = verdict {
            return Ok((v, replies, false));
        }
    }
    let fallback = bracket.higher_ranked(pair);
    tracing::warn!(%fallback, "no verdict after retry; defaulting to higher-ranked candidate");
    Ok((fallback, replies, true))
}

/// Contrastive pairwise tournament: three chained calls per comparison.
pub fn run_pc_cot(
    text: &str,
    candidates: &[LabelId],
    store: &DemonstrationStore,
    config: &ComparisonConfig,
    gateway: &Gateway,
) -> Result<ComparisonTranscript> {
    let mut bracket = Bracket::new(candidates, config)?;
    let mut pairs = Vec::new();
    let (mut calls, mut latency) = (0u64, 0.0);
    let mut round = 0u64;
    while let Some(pair) = bracket.next_pair(round, config) {
        let demos = demos_for(store, &pair, config.shots, seed::derive(config.seed, &[round, 1]), text)?;
        let sim = fit(ModelQuery::similarity(text, pair.clone(), demos), config)?;
        let demos = sim.demonstrations.clone().unwrap_or_default();
        let shared = gateway.complete(&sim)?;
        let diff = ModelQuery::difference(text, pair.clone(), demos.clone(), shared.text.clone());
        let contrast = gateway.complete(&diff)?;
        calls += 2;
        latency += shared.latency_ms + contrast.latency_ms;
        let q = ModelQuery::decide(text, pair.clone(), demos, shared.text.clone(), contrast.text.clone());
        let retry = seed::derive(config.seed, &[round, 2]);
        let (verdict, replies, defaulted) =
            decide(q, &pair, &bracket, retry, gateway, &mut calls, &mut latency)?;
        bracket.winner(verdict.clone());
        let [label1, label2] = pair;
        pairs.push(PairRecord {
            label1,
            label2,
            shared: Some(shared.text),
            contrast: Some(contrast.text),
            replies,
            verdict,
            defaulted,
        });
        round += 1;
    }
    Ok(ComparisonTranscript {
        text: text.to_string(),
        method: Method::PcCot,
        candidates: candidates.to_vec(),
        pairs,
        reply: None,
        final_label: Some(bracket.champion()),
        calls,
        latency_ms: latency,
    })
}

/// Pairwise tournament with one call per comparison.
pub fn run_pairwise_baseline(
    text: &str,
    candidates: &[LabelId],
    store: &DemonstrationStore,
    config: &ComparisonConfig,
    gateway: &Gateway,
) -> Result<ComparisonTranscript> {
    let method = config.method;
    if method.is_full_option() || method == Method::PcCot {
        return Err(Error::InvalidQuery(format!("{method} is not a pairwise baseline")));
    }
    let mut bracket = Bracket::new(candidates, config)?;
    let mut pairs = Vec::new();
    let (mut calls, mut latency) = (0u64, 0.0);
    let mut round = 0u64;
    while let Some(pair) = bracket.next_pair(round, config) {
        let demos = if method.few_shot() {
            Some(demos_for(store, &pair, config.shots, seed::derive(config.seed, &[round, 1]), text)?)
        } else {
            None
        };
        let q = fit(ModelQuery::pairwise_choice(text, pair.clone(), method.cot(), demos), config)?;
        let retry = seed::derive(config.seed, &[round, 2]);
        let (verdict, replies, defaulted) =
            decide(q, &pair, &bracket, retry, gateway, &mut calls, &mut latency)?;
        bracket.winner(verdict.clone());
        let [label1, label2] = pair;
        pairs.push(PairRecord {
            label1,
            label2,
            shared: None,
            contrast: None,
            replies,
            verdict,
            defaulted,
        });
        round += 1;
    }
    Ok(ComparisonTranscript {
        text: text.to_string(),
        method,
        candidates: candidates.to_vec(),
        pairs,
        reply: None,
        final_label: Some(bracket.champion()),
        calls,
        latency_ms: latency,
    })
}

/// One call over the whole option list. Few-shot variants draw `shots`
/// demonstrations for every option, trimmed to the context budget.
pub fn run_full_option_baseline(
    text: &str,
    options: &[LabelId],
    store: &DemonstrationStore,
    config: &ComparisonConfig,
    gateway: &Gateway,
) -> Result<ComparisonTranscript> {
    let method = config.method;
    if !method.is_full_option() {
        return Err(Error::InvalidQuery(format!("{method} is not a full-option baseline")));
    }
    let demos = if method.few_shot() {
        Some(demos_for(store, options, config.shots, seed::derive(config.seed, &[1]), text)?)
    } else {
        None
    };
    let q = fit(ModelQuery::full_choice(text, options.to_vec(), method.cot(), demos), config)?;
    let reply = gateway.complete(&q)?;
    let final_label = parse_label_choice(&reply.text, options);
    if final_label.is_none() {
        tracing::warn!("full-option reply named no option; recording an abstain");
    }
    Ok(ComparisonTranscript {
        text: text.to_string(),
        method,
        candidates: options.to_vec(),
        pairs: Vec::new(),
        reply: Some(reply.text),
        final_label,
        calls: 1,
        latency_ms: reply.latency_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
    }

    #[test]
    fn fifo_bracket_without_flips() {
        let config = ComparisonConfig {
            randomize_pair_positions: false,
            ..Default::default()
        };
        let c: Vec<LabelId> = ["a", "b", "c"].iter().map(LabelId::new).collect();
        let mut b = Bracket::new(&c, &config).unwrap();
        let p = b.next_pair(0, &config).unwrap();
        assert_eq!(p, [c[0].clone(), c[1].clone()]);
        b.winner(c[1].clone());
        assert_eq!(b.next_pair(1, &config).unwrap(), [c[1].clone(), c[2].clone()]);
        b.winner(c[2].clone());
        assert!(b.next_pair(2, &config).is_none());
        assert_eq!(b.champion(), c[2]);
    }
}
