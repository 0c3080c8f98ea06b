//! Stage one: shrinking the option set `Y` to a short candidate list `R`.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::catalog::LabelId;
use crate::cluster::kmeans;
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::parse::parse_topk_reply;
use crate::query::{Decoding, ModelQuery};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Standard,
    SelfConsistency,
    Itr,
    Cbwr,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Standard,
        Strategy::SelfConsistency,
        Strategy::Itr,
        Strategy::Cbwr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Standard => "standard",
            Strategy::SelfConsistency => "self_consistency",
            Strategy::Itr => "itr",
            Strategy::Cbwr => "cbwr",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(vec![format!("unknown strategy `{s}`")]))
    }
}

/// Per-step sizes for iterative top reduction.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItrSchedule {
    #[default]
    #[serde(with = "halving")]
    Halving,
    Explicit(Vec<usize>),
}

mod halving {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("halving")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        match String::deserialize(d)?.as_str() {
            "halving" => Ok(()),
            other => Err(D::Error::custom(format!("unknown schedule `{other}`"))),
        }
    }
}

impl ItrSchedule {
    /// Step sizes for a pool of `pool` options narrowing to `n`. Explicit
    /// entries not smaller than the pool are skipped.
    pub fn steps(&self, pool: usize, n: usize) -> Vec<usize> {
        if pool <= n {
            return Vec::new();
        }
        match self {
            ItrSchedule::Halving => {
                let mut k = n.max(pool.div_ceil(2));
                let mut out = vec![k];
                while k > n {
                    k = n.max(k.div_ceil(2));
                    out.push(k);
                }
                out
            }
            ItrSchedule::Explicit(list) => list.iter().copied().filter(|&k| k < pool).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReductionConfig {
    pub strategy: Strategy,
    /// Target size of the reduced set.
    pub n: usize,
    /// Self-consistency sample count.
    pub votes: usize,
    /// Sampling temperature for self-consistency votes.
    pub vote_temperature: f64,
    /// CBWR step limit.
    pub steps: usize,
    /// CBWR cluster count.
    pub clusters: usize,
    /// CBWR options drawn per cluster into each window.
    pub per_cluster: usize,
    pub itr_schedule: ItrSchedule,
    pub seed: u64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            strategy: Strategy::Standard,
            n: 5,
            votes: 5,
            vote_temperature: 0.7,
            steps: 10,
            clusters: 5,
            per_cluster: 4,
            itr_schedule: ItrSchedule::Halving,
            seed: 0,
        }
    }
}

impl ReductionConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("n", self.n),
            ("votes", self.votes),
            ("clusters", self.clusters),
            ("per_cluster", self.per_cluster),
        ] {
            if v == 0 {
                problems.push(format!("reduction.{name} must be at least 1"));
            }
        }
        if let ItrSchedule::Explicit(list) = &self.itr_schedule {
            if list.windows(2).any(|w| w[0] <= w[1]) {
                problems.push("reduction.itr_schedule must be strictly decreasing".into());
            }
            if list.last() != Some(&self.n) {
                problems.push(format!("reduction.itr_schedule must end at n = {}", self.n));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// One model call of a reduction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionStep {
    /// Options shown, in prompt order.
    pub window: Vec<LabelId>,
    /// Options selected, in rank order (after padding).
    pub kept: Vec<LabelId>,
    pub discarded: Vec<LabelId>,
    /// How many of `kept` were filled in because the reply named too few.
    pub padded: usize,
    pub reply: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionResult {
    pub strategy: Strategy,
    /// Candidates in selection-confidence order.
    pub reduced: Vec<LabelId>,
    pub calls: u64,
    pub trace: Vec<ReductionStep>,
    /// Sum of reply latencies.
    pub latency_ms: f64,
}

impl ReductionResult {
    fn pass_through(strategy: Strategy, options: &[LabelId]) -> Self {
        ReductionResult {
            strategy,
            reduced: options.to_vec(),
            calls: 0,
            trace: Vec::new(),
            latency_ms: 0.0,
        }
    }
}

/// Runs the configured strategy. `embeddings` must cover every option when
/// the strategy is CBWR.
pub fn reduce(
    text: &str,
    options: &[LabelId],
    config: &ReductionConfig,
    gateway: &Gateway,
    embeddings: Option<&EmbeddingMatrix>,
) -> Result<ReductionResult> {
    match config.strategy {
        Strategy::Standard => reduce_standard(text, options, config, gateway),
        Strategy::SelfConsistency => reduce_self_consistency(text, options, config, gateway),
        Strategy::Itr => reduce_itr(text, options, config, gateway),
        Strategy::Cbwr => {
            let emb = embeddings
                .ok_or_else(|| Error::Reduction("cbwr needs label embeddings".into()))?;
            reduce_cbwr(text, options, config, gateway, emb)
        }
    }
}

fn check_options(options: &[LabelId]) -> Result<()> {
    if options.is_empty() {
        return Err(Error::Reduction("option set is empty".into()));
    }
    Ok(())
}

/// One `reduce_topk(k)` call over `window`, padded to `k` from the window in
/// prompt order.
fn select(
    text: &str,
    window: &[LabelId],
    k: usize,
    decoding: Decoding,
    gateway: &Gateway,
) -> Result<(ReductionStep, f64)> {
    let q = ModelQuery::reduce_topk(text, window.to_vec(), k).with_decoding(decoding);
    let reply = gateway.complete(&q)?;
    let mut kept = parse_topk_reply(&reply.text, window, k);
    let parsed = kept.len();
    for o in window {
        if kept.len() >= k {
            break;
        }
        if !kept.contains(o) {
            kept.push(o.clone());
        }
    }
    if parsed < kept.len() {
        tracing::warn!(parsed, k, "reduction reply named too few options; padded");
    }
    let discarded = window.iter().filter(|o| !kept.contains(o)).cloned().collect();
    Ok((
        ReductionStep {
            window: window.to_vec(),
            padded: kept.len() - parsed,
            kept,
            discarded,
            reply: reply.text,
        },
        reply.latency_ms,
    ))
}

/// A single top-`N` call over all options.
pub fn reduce_standard(
    text: &str,
    options: &[LabelId],
    config: &ReductionConfig,
    gateway: &Gateway,
) -> Result<ReductionResult> {
    check_options(options)?;
    if options.len() <= config.n {
        return Ok(ReductionResult::pass_through(Strategy::Standard, options));
    }
    let (step, latency) = select(text, options, config.n, Decoding::default(), gateway)?;
    Ok(ReductionResult {
        strategy: Strategy::Standard,
        reduced: step.kept.clone(),
        calls: 1,
        trace: vec![step],
        latency_ms: latency,
    })
}

/// `votes` sampled top-`N` calls aggregated by vote count, then by mean rank
/// among the votes naming a label, then by option order.
pub fn reduce_self_consistency(
    text: &str,
    options: &[LabelId],
    config: &ReductionConfig,
    gateway: &Gateway,
) -> Result<ReductionResult> {
    check_options(options)?;
    if options.len() <= config.n {
        return Ok(ReductionResult::pass_through(Strategy::SelfConsistency, options));
    }
    let mut trace = Vec::with_capacity(config.votes);
    let mut latency = 0.0;
    // label -> (votes, rank sum)
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut usable = 0;
    for v in 0..config.votes {
        let decoding = Decoding {
            temperature: config.vote_temperature,
            seed: Some(seed::derive(config.seed, &[v as u64])),
            ..Decoding::default()
        };
        let q = ModelQuery::reduce_topk(text, options.to_vec(), config.n).with_decoding(decoding);
        let reply = gateway.complete(&q)?;
        latency += reply.latency_ms;
        let picks = parse_topk_reply(&reply.text, options, config.n);
        if !picks.is_empty() {
            usable += 1;
        }
        for (rank, label) in picks.iter().enumerate() {
            let idx = options.iter().position(|o| o == label).expect("parsed from options");
            let entry = tally.entry(idx).or_default();
            entry.0 += 1;
            entry.1 += rank;
        }
        trace.push(ReductionStep {
            window: options.to_vec(),
            discarded: options.iter().filter(|o| !picks.contains(o)).cloned().collect(),
            kept: picks,
            padded: 0,
            reply: reply.text,
        });
    }
    if usable == 0 {
        return Err(Error::Reduction(format!(
            "none of {} self-consistency replies named an option",
            config.votes
        )));
    }
    let mut ranked: Vec<(usize, (usize, usize))> = tally.into_iter().collect();
    // Compare mean ranks r1/v1 < r2/v2 exactly as r1·v2 < r2·v1.
    ranked.sort_by(|(i, (v1, r1)), (j, (v2, r2))| {
        v2.cmp(v1)
            .then((r1 * v2).cmp(&(r2 * v1)))
            .then(i.cmp(j))
    });
    let mut reduced: Vec<LabelId> = ranked
        .iter()
        .take(config.n)
        .map(|(i, _)| options[*i].clone())
        .collect();
    for o in options {
        if reduced.len() >= config.n {
            break;
        }
        if !reduced.contains(o) {
            reduced.push(o.clone());
        }
    }
    Ok(ReductionResult {
        strategy: Strategy::SelfConsistency,
        reduced,
        calls: config.votes as u64,
        trace,
        latency_ms: latency,
    })
}

/// Iterative top reduction: each step keeps the top `k_t` of the previous
/// step's survivors, which are shown in their previous order.
pub fn reduce_itr(
    text: &str,
    options: &[LabelId],
    config: &ReductionConfig,
    gateway: &Gateway,
) -> Result<ReductionResult> {
    check_options(options)?;
    if options.len() <= config.n {
        return Ok(ReductionResult::pass_through(Strategy::Itr, options));
    }
    let schedule = config.itr_schedule.steps(options.len(), config.n);
    let mut pool = options.to_vec();
    let mut trace = Vec::with_capacity(schedule.len());
    let mut latency = 0.0;
    let mut reduced = pool.clone();
    for k in schedule {
        let (step, l) = select(text, &pool, k, Decoding::default(), gateway)?;
        latency += l;
        reduced = step.kept.clone();
        pool.retain(|o| step.kept.contains(o));
        trace.push(step);
    }
    Ok(ReductionResult {
        strategy: Strategy::Itr,
        calls: trace.len() as u64,
        reduced,
        trace,
        latency_ms: latency,
    })
}

/// Cluster-based window reduction.
///
/// While more than `N` options survive (and the step limit allows), the
/// survivors are clustered, a window of up to `per_cluster` options per
/// cluster is drawn, and the model keeps `N` of the window; the rest of the
/// window is discarded. Unshown survivors stay eligible. When the window
/// quota exceeds what small clusters can supply, the remainder is drawn
/// round-robin from clusters with members left.
pub fn reduce_cbwr(
    text: &str,
    options: &[LabelId],
    config: &ReductionConfig,
    gateway: &Gateway,
    embeddings: &EmbeddingMatrix,
) -> Result<ReductionResult> {
    check_options(options)?;
    if options.len() <= config.n {
        return Ok(ReductionResult::pass_through(Strategy::Cbwr, options));
    }
    let mut survivors = options.to_vec();
    let mut trace = Vec::new();
    let mut latency = 0.0;
    let mut reduced = Vec::new();
    let mut step = 0u64;
    while survivors.len() > config.n && (step as usize) < config.steps {
        let mut rng = seed::rng(seed::derive(config.seed, &[step]));
        let mut window = cbwr_window(&survivors, config, embeddings, seed::derive(config.seed, &[step, 1]), &mut rng)?;
        window.shuffle(&mut rng);
        let (s, l) = select(text, &window, config.n, Decoding::default(), gateway)?;
        latency += l;
        let dropped: HashSet<&LabelId> = s.discarded.iter().collect();
        survivors.retain(|o| !dropped.contains(o));
        reduced = s.kept.clone();
        trace.push(s);
        step += 1;
    }
    if survivors.len() > config.n {
        let mut rng = seed::rng(seed::derive(config.seed, &[step]));
        let mut window = survivors.clone();
        window.shuffle(&mut rng);
        let (s, l) = select(text, &window, config.n, Decoding::default(), gateway)?;
        latency += l;
        reduced = s.kept.clone();
        trace.push(s);
    }
    Ok(ReductionResult {
        strategy: Strategy::Cbwr,
        calls: trace.len() as u64,
        reduced,
        trace,
        latency_ms: latency,
    })
}

/// The first query a strategy would issue, without calling any backend.
/// `None` when the options pass through untouched.
pub fn first_query(
    text: &str,
    options: &[LabelId],
    config: &ReductionConfig,
    embeddings: Option<&EmbeddingMatrix>,
) -> Result<Option<ModelQuery>> {
    check_options(options)?;
    if options.len() <= config.n {
        return Ok(None);
    }
    let q = match config.strategy {
        Strategy::Standard => ModelQuery::reduce_topk(text, options.to_vec(), config.n),
        Strategy::SelfConsistency => ModelQuery::reduce_topk(text, options.to_vec(), config.n).with_decoding(Decoding {
            temperature: config.vote_temperature,
            seed: Some(seed::derive(config.seed, &[0])),
            ..Decoding::default()
        }),
        Strategy::Itr => {
            let k = config.itr_schedule.steps(options.len(), config.n)[0];
            ModelQuery::reduce_topk(text, options.to_vec(), k)
        }
        Strategy::Cbwr => {
            let emb = embeddings
                .ok_or_else(|| Error::Reduction("cbwr needs label embeddings".into()))?;
            let mut rng = seed::rng(seed::derive(config.seed, &[0]));
            let mut window = cbwr_window(options, config, emb, seed::derive(config.seed, &[0, 1]), &mut rng)?;
            window.shuffle(&mut rng);
            ModelQuery::reduce_topk(text, window, config.n)
        }
    };
    Ok(Some(q))
}

fn cbwr_window(
    survivors: &[LabelId],
    config: &ReductionConfig,
    embeddings: &EmbeddingMatrix,
    cluster_seed: u64,
    rng: &mut seed::Rng,
) -> Result<Vec<LabelId>> {
    let k = config.clusters.min(survivors.len());
    let capacity = k * config.per_cluster;
    if survivors.len() <= capacity {
        return Ok(survivors.to_vec());
    }
    let ids: Vec<&str> = survivors.iter().map(LabelId::as_str).collect();
    let assignment = kmeans(&embeddings.select(&ids)?, k, cluster_seed)?;
    let mut clusters: Vec<Vec<usize>> = (0..k).map(|c| assignment.members(c)).collect();
    for members in clusters.iter_mut() {
        members.shuffle(rng);
    }
    let mut taken = vec![0usize; k];
    let mut window = Vec::with_capacity(capacity);
    for (c, members) in clusters.iter().enumerate() {
        let n = members.len().min(config.per_cluster);
        window.extend(members[..n].iter().map(|&i| survivors[i].clone()));
        taken[c] = n;
    }
    while window.len() < capacity {
        for (c, members) in clusters.iter().enumerate() {
            if window.len() == capacity {
                break;
            }
            if taken[c] < members.len() {
                window.push(survivors[members[taken[c]]].clone());
                taken[c] += 1;
            }
        }
    }
    Ok(window)
}
