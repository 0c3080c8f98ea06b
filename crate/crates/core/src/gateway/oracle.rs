//! Scripted oracle: a deterministic synthetic backend with tunable accuracy
//! and biases.
//!
//! Each offered option gets a score
//!
//! ```text
//! score_i = g·[i = gold] + s·sim(y_i, gold) + τ(y_i) + β(i) + λ·G_i
//! ```
//!
//! where `G_i` is standard Gumbel noise seeded by (oracle seed, query). The
//! choice is the argmax (the top-k for reduction queries). Under Gumbel noise
//! the argmax follows a softmax with temperature `λ`, so the gold weight `g`
//! can be solved in closed form per call: with `β = τ = 0` the gold option
//! wins with probability exactly `a(k)`, the count curve at `k` options.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Backend;
use crate::catalog::LabelId;
use crate::error::{Error, Result};
use crate::query::{ModelQuery, ModelReply, QueryKind};
use crate::seed;

/// Base accuracy as a function of option count, interpolated linearly in
/// `ln k` between anchors and held flat outside them. One option is always
/// answered correctly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, f64)>", into = "Vec<(usize, f64)>")]
pub struct CountCurve {
    anchors: Vec<(usize, f64)>,
}

impl TryFrom<Vec<(usize, f64)>> for CountCurve {
    type Error = Error;

    fn try_from(anchors: Vec<(usize, f64)>) -> Result<Self> {
        CountCurve::new(anchors)
    }
}

impl From<CountCurve> for Vec<(usize, f64)> {
    fn from(c: CountCurve) -> Self {
        c.anchors
    }
}

impl CountCurve {
    pub fn new(mut anchors: Vec<(usize, f64)>) -> Result<Self> {
        anchors.sort_by_key(|a| a.0);
        if anchors.is_empty() {
            return Err(Error::Config(vec!["count curve needs an anchor".into()]));
        }
        for w in anchors.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Config(vec![format!("duplicate anchor k={}", w[0].0)]));
            }
        }
        if let Some(bad) = anchors.iter().find(|(k, a)| *k == 0 || !(0.0..=1.0).contains(a)) {
            return Err(Error::Config(vec![format!("bad anchor {bad:?}")]));
        }
        Ok(CountCurve { anchors })
    }

    pub fn constant(a: f64) -> Self {
        CountCurve {
            anchors: vec![(2, a)],
        }
    }

    pub fn anchors(&self) -> &[(usize, f64)] {
        &self.anchors
    }

    pub fn accuracy(&self, k: usize) -> f64 {
        if k <= 1 {
            return 1.0;
        }
        let first = self.anchors[0];
        let last = *self.anchors.last().expect("non-empty");
        if k <= first.0 {
            return first.1;
        }
        if k >= last.0 {
            return last.1;
        }
        let i = self.anchors.partition_point(|a| a.0 <= k);
        let (k0, a0) = self.anchors[i - 1];
        let (k1, a1) = self.anchors[i];
        let t = ((k as f64).ln() - (k0 as f64).ln()) / ((k1 as f64).ln() - (k0 as f64).ln());
        a0 + t * (a1 - a0)
    }
}

impl Default for CountCurve {
    /// Anchored at 94.29% for two options and 32.51% for sixty.
    fn default() -> Self {
        CountCurve {
            anchors: vec![(2, 0.9429), (60, 0.3251)],
        }
    }
}

/// Symmetric label-by-label similarity in `[0, 1]` with unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<LabelId>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        let mut problems = Vec::new();
        if self.values.len() != n || self.values.iter().any(|r| r.len() != n) {
            problems.push(format!("similarity matrix must be {n}x{n}"));
        } else {
            for i in 0..n {
                if (self.values[i][i] - 1.0).abs() > 1e-9 {
                    problems.push(format!("similarity diagonal at {i} is not 1"));
                }
                for j in 0..n {
                    let v = self.values[i][j];
                    if !(0.0..=1.0).contains(&v) || (v - self.values[j][i]).abs() > 1e-9 {
                        problems.push(format!("similarity[{i}][{j}] not symmetric in [0,1]"));
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedOracleConfig {
    pub count_curve: CountCurve,
    /// Additive score by 0-based option position.
    pub position_bias: Vec<f64>,
    /// Additive score by label.
    pub token_pref: BTreeMap<LabelId, f64>,
    pub similarity: Option<SimilarityMatrix>,
    pub similarity_weight: f64,
    /// Gumbel noise scale `λ`. Zero makes the oracle a pure argmax.
    pub sharpness: f64,
    /// Gold weight used when `sharpness` is zero.
    pub noise_free_gold_weight: f64,
    pub seed: u64,
    /// Reply to explanation-generation queries.
    pub explanation_text: String,
}

impl Default for ScriptedOracleConfig {
    fn default() -> Self {
        ScriptedOracleConfig {
            count_curve: CountCurve::default(),
            position_bias: Vec::new(),
            token_pref: BTreeMap::new(),
            similarity: None,
            similarity_weight: 0.0,
            sharpness: 1.0,
            noise_free_gold_weight: 1.0,
            seed: 0,
            explanation_text: "The sentence expresses the intent named by its label.".into(),
        }
    }
}

impl ScriptedOracleConfig {
    /// Noise-free, bias-free: always answers gold.
    pub fn faithful() -> Self {
        ScriptedOracleConfig {
            sharpness: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.sharpness >= 0.0 && self.sharpness.is_finite()) {
            problems.push("sharpness must be a non-negative number".to_string());
        }
        if let Some(sim) = &self.similarity {
            if let Err(Error::Config(p)) = sim.validate() {
                problems.extend(p);
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

pub struct ScriptedOracle {
    config: ScriptedOracleConfig,
    answers: HashMap<String, LabelId>,
    sim_index: HashMap<LabelId, usize>,
    id: String,
}

impl ScriptedOracle {
    /// `answers` maps input text to its gold label; the first entry wins when
    /// a text repeats.
    pub fn new<I>(config: ScriptedOracleConfig, answers: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, LabelId)>,
    {
        config.validate()?;
        let mut map = HashMap::new();
        for (text, gold) in answers {
            map.entry(text).or_insert(gold);
        }
        let sim_index = config
            .similarity
            .as_ref()
            .map(|s| s.labels.iter().cloned().zip(0..).collect())
            .unwrap_or_default();
        let digest = seed::hash_str(&serde_json::to_string(&config)?);
        Ok(ScriptedOracle {
            id: format!("scripted:{digest:016x}"),
            config,
            answers: map,
            sim_index,
        })
    }

    pub fn config(&self) -> &ScriptedOracleConfig {
        &self.config
    }

    pub fn gold_for(&self, text: &str) -> Option<&LabelId> {
        self.answers.get(text)
    }

    fn similarity(&self, a: &LabelId, b: &LabelId) -> f64 {
        match &self.config.similarity {
            Some(m) => match (self.sim_index.get(a), self.sim_index.get(b)) {
                (Some(&i), Some(&j)) => m.values[i][j],
                _ => f64::from(a == b),
            },
            None => 0.0,
        }
    }

    /// Score of every offered option, before taking the argmax.
    pub fn scores(&self, query: &ModelQuery) -> Vec<f64> {
        let cfg = &self.config;
        let options = &query.options;
        let k = options.len();
        let lambda = cfg.sharpness;
        let s = cfg.similarity_weight;
        let gold = self
            .answers
            .get(&query.text)
            .and_then(|g| options.iter().position(|o| o == g));

        let mut scores: Vec<f64> = options
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let content = match gold {
                    Some(g) if g != i && s != 0.0 => s * self.similarity(label, &options[g]),
                    _ => 0.0,
                };
                let token = cfg.token_pref.get(label).copied().unwrap_or(0.0);
                let position = cfg.position_bias.get(i).copied().unwrap_or(0.0);
                content + token + position
            })
            .collect();

        if let Some(g) = gold {
            scores[g] += if lambda == 0.0 {
                cfg.noise_free_gold_weight + s
            } else {
                self.calibrated_gold_content(options, g, k)
            };
        }
        if lambda > 0.0 {
            let digest = serde_json::to_string(query).expect("query serializes");
            let mut rng = seed::rng(seed::derive_str(cfg.seed, &digest));
            for v in scores.iter_mut() {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                *v += lambda * -(-u.ln()).ln();
            }
        }
        scores
    }

    /// Gold content score making the bias-free softmax win-rate equal `a(k)`:
    /// `ln(a / (1 - a)) · λ + λ·ln Σ_{j≠gold} exp(s·sim_j / λ)`.
    fn calibrated_gold_content(&self, options: &[LabelId], gold: usize, k: usize) -> f64 {
        let lambda = self.config.sharpness;
        let a = self.config.count_curve.accuracy(k);
        if k == 1 || a >= 1.0 {
            return f64::INFINITY;
        }
        if a <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let s = self.config.similarity_weight;
        let others: Vec<f64> = options
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != gold)
            .map(|(_, l)| {
                if s == 0.0 {
                    0.0
                } else {
                    s * self.similarity(l, &options[gold]) / lambda
                }
            })
            .collect();
        let max = others.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + others.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        lambda * ((a / (1.0 - a)).ln() + lse)
    }

    /// Options ranked by score (ties keep presentation order), truncated to
    /// `top_k` for reduction queries and to one otherwise.
    pub fn decide(&self, query: &ModelQuery) -> Vec<LabelId> {
        let scores = self.scores(query);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let take = match query.kind {
            QueryKind::ReduceTopk => query.top_k.unwrap_or(1).min(order.len()),
            _ => 1,
        };
        order[..take]
            .iter()
            .map(|&i| query.options[i].clone())
            .collect()
    }

    fn reply_text(&self, query: &ModelQuery) -> String {
        let pair = || (query.options[0].as_str(), query.options[1].as_str());
        match query.kind {
            QueryKind::ReduceTopk => {
                let picks: Vec<String> = self.decide(query).iter().map(|l| l.to_string()).collect();
                format!("CHOICE: {}", picks.join(", "))
            }
            QueryKind::FullChoice | QueryKind::PairwiseChoice | QueryKind::PairwiseDecide => {
                format!("LABEL: {}", self.decide(query)[0])
            }
            QueryKind::SimilarityAnalysis => {
                let (a, b) = pair();
                format!("- Both \"{a}\" and \"{b}\" describe closely related requests.")
            }
            QueryKind::DifferenceAnalysis => {
                let (a, b) = pair();
                format!("- \"{a}\" and \"{b}\" differ in the specific situation each one describes.")
            }
            QueryKind::ExplanationGen => self.config.explanation_text.clone(),
        }
    }
}

impl Backend for ScriptedOracle {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn complete(&self, query: &ModelQuery) -> Result<ModelReply> {
        Ok(ModelReply {
            text: self.reply_text(query),
            latency_ms: 0.0,
            token_usage: None,
            backend_id: self.id.clone(),
        })
    }
}
