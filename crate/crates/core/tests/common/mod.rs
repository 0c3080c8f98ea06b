#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use optpick::dataset::save_dataset;
use optpick::prompt::TemplateInput;
use optpick::gateway::{Backend, ScriptedOracle, ScriptedOracleConfig};
use optpick::query::{ModelQuery, ModelReply};
use optpick::{DemonstrationStore, Exemplar, Gateway, Instance, LabelCatalog, LabelId, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HEADS: [&str; 6] = ["card", "transfer", "top_up", "cash", "account", "pin"];
const TAILS: [&str; 10] = [
    "arrival", "failed", "pending", "fee", "limit", "refund", "declined", "reverted", "missing", "blocked",
];

/// Label names built from banking-flavoured word pairs; up to 60.
pub fn label_names(n: usize) -> Vec<String> {
    assert!(n <= 60);
    HEADS
        .iter()
        .flat_map(|h| TAILS.iter().map(move |t| format!("{h}_{t}")))
        .take(n)
        .collect()
}

pub fn catalog(n: usize) -> LabelCatalog {
    LabelCatalog::new(label_names(n)).unwrap()
}

/// `n` instances with uniformly drawn gold labels and unique texts.
pub fn instances(catalog: &LabelCatalog, n: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = catalog.ids();
    (0..n)
        .map(|i| {
            let gold = &ids[rng.gen_range(0..ids.len())];
            let words = gold.as_str().replace('_', " ");
            Instance::new(i, format!("request {seed}-{i}: something about {words}"), gold.clone())
        })
        .collect()
}

/// Three exemplars per label, with explanations.
pub fn store(catalog: &LabelCatalog) -> DemonstrationStore {
    let mut s = DemonstrationStore::new();
    for id in catalog.ids() {
        for j in 0..3 {
            let mut e = Exemplar::new(format!("example {j} of {id}"), id.clone());
            e.explanation = Some(format!("It is about {id}."));
            s.insert(e);
        }
    }
    s
}

pub fn train_instances(catalog: &LabelCatalog) -> Vec<Instance> {
    store(catalog)
        .iter()
        .enumerate()
        .map(|(i, e)| Instance::new(i, e.text.clone(), e.label.clone()))
        .collect()
}

pub fn oracle(config: ScriptedOracleConfig, instances: &[Instance]) -> Arc<ScriptedOracle> {
    let answers = instances.iter().map(|i| (i.text.clone(), i.gold.clone()));
    Arc::new(ScriptedOracle::new(config, answers).unwrap())
}

pub fn gateway(config: ScriptedOracleConfig, instances: &[Instance]) -> Gateway {
    Gateway::new(oracle(config, instances))
}

/// Writes `catalog.json`, `test.jsonl` and `train.jsonl` into `dir`.
pub fn write_inputs(dir: &Path, catalog: &LabelCatalog, test: &[Instance]) {
    catalog.save(dir.join("catalog.json")).unwrap();
    save_dataset(dir.join("test.jsonl"), test).unwrap();
    save_dataset(dir.join("train.jsonl"), &train_instances(catalog)).unwrap();
}

/// Backend answering every query with a fixed reply.
pub struct Canned(pub String);

impl Backend for Canned {
    fn id(&self) -> String {
        format!("canned:{}", self.0)
    }

    fn complete(&self, _q: &ModelQuery) -> Result<ModelReply> {
        Ok(ModelReply {
            text: self.0.clone(),
            latency_ms: 10.0,
            token_usage: None,
            backend_id: self.id(),
        })
    }
}

/// Backend replying through a closure.
pub struct FnBackend<F>(pub F);

impl<F> Backend for FnBackend<F>
where
    F: Fn(&ModelQuery) -> String + Send + Sync,
{
    fn id(&self) -> String {
        "fn".into()
    }

    fn complete(&self, q: &ModelQuery) -> Result<ModelReply> {
        Ok(ModelReply {
            text: (self.0)(q),
            latency_ms: 1.0,
            token_usage: None,
            backend_id: "fn".into(),
        })
    }
}

pub fn ids(v: &[&str]) -> Vec<LabelId> {
    v.iter().map(LabelId::new).collect()
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

/// The canonical prompt fixture the golden files were written against.
pub struct GoldenFixture {
    pub options: Vec<LabelId>,
    pub demos: Vec<Exemplar>,
}

impl GoldenFixture {
    pub fn new() -> Self {
        let mut a = Exemplar::new("My top-up failed twice today.", "top_up_failed");
        a.explanation = Some("The user says the top-up did not go through.".into());
        let mut b = Exemplar::new("Why is my top-up still pending?", "pending_top_up");
        b.explanation = Some("The top-up was made but has not completed yet.".into());
        GoldenFixture {
            options: ids(&[
                "pending_top_up",
                "top_up_failed",
                "topping_up_by_card",
                "card_not_working",
                "balance_not_updated",
            ]),
            demos: vec![a, b],
        }
    }

    pub fn input(&self) -> TemplateInput<'_> {
        TemplateInput {
            text: Some("So I just put my top-up into the card and it hasn't changed."),
            options: Some(&self.options),
            top_k: Some(3),
            label1: Some("top_up_failed"),
            label2: Some("pending_top_up"),
            explain: None,
            demonstrations: &self.demos,
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Mean silhouette written straight from its definition: for each point,
/// a = mean distance to the rest of its class, b = smallest mean distance
/// to another class, s = (b − a) / max(a, b), and s = 0 for a point alone
/// in its class.
pub fn brute_silhouette(points: &[Vec<f64>], classes: &[usize], d: fn(&[f64], &[f64]) -> f64) -> f64 {
    let n = points.len();
    let labels: BTreeSet<usize> = classes.iter().copied().collect();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && classes[j] == classes[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d(&points[i], &points[j])).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        for &c in labels.iter().filter(|&&c| c != classes[i]) {
            let other: Vec<usize> = (0..n).filter(|&j| classes[j] == c).collect();
            b = b.min(other.iter().map(|&j| d(&points[i], &points[j])).sum::<f64>() / other.len() as f64);
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}
