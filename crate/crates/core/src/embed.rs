//! Text embeddings behind an injected source.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub item_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub dim: usize,
    pub normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(item_ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if item_ids.len() != rows.len() {
            return Err(Error::Embedding(format!(
                "{} ids for {} rows",
                item_ids.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Embedding(format!(
                "row `{}` has dim {}, expected {dim}",
                item_ids[i],
                rows[i].len()
            )));
        }
        let mut seen = HashMap::new();
        for id in &item_ids {
            if seen.insert(id.as_str(), ()).is_some() {
                return Err(Error::Embedding(format!("duplicate item id `{id}`")));
            }
        }
        Ok(EmbeddingMatrix {
            item_ids,
            rows,
            dim,
            normalized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.item_ids.iter().position(|x| x == id)
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.rows[i].as_slice())
    }

    /// Scales every row to unit Euclidean norm.
    pub fn normalize(mut self) -> Result<Self> {
        for (id, row) in self.item_ids.iter().zip(self.rows.iter_mut()) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::Embedding(format!("cannot normalize vector of `{id}`")));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        self.normalized = true;
        Ok(self)
    }

    /// Rows for `ids`, in that order.
    pub fn select(&self, ids: &[&str]) -> Result<EmbeddingMatrix> {
        let index: HashMap<&str, usize> = self
            .item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id)
                    .map(|&i| self.rows[i].clone())
                    .ok_or_else(|| Error::Embedding(format!("no embedding for `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EmbeddingMatrix {
            item_ids: ids.iter().map(|s| s.to_string()).collect(),
            rows,
            dim: self.dim,
            normalized: self.normalized,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// JSON file `{"dim": d, "items": [{"id": ..., "vec": [...]}]}`.
    File { path: PathBuf },
    /// OpenAI-compatible `POST {base_url}/embeddings`.
    Http {
        base_url: String,
        model: String,
        #[serde(default = "default_key_env")]
        api_key_env: String,
    },
    /// Offline hashed bag of words and character trigrams.
    Lexical {
        #[serde(default = "default_lexical_dim")]
        dim: usize,
    },
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_lexical_dim() -> usize {
    64
}

impl Default for EmbeddingSource {
    fn default() -> Self {
        EmbeddingSource::Lexical {
            dim: default_lexical_dim(),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingFile {
    dim: usize,
    items: Vec<FileItem>,
}

#[derive(Deserialize)]
struct FileItem {
    id: String,
    vec: Vec<f64>,
}

/// Embeds `items`, one L2-normalized row per item in order. Repeated items
/// get distinct ids (`text`, `text#1`, ...) and share a vector.
pub fn embed(items: &[String], source: &EmbeddingSource) -> Result<EmbeddingMatrix> {
    let rows = match source {
        EmbeddingSource::File { path } => {
            let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file: EmbeddingFile = serde_json::from_str(&raw)?;
            let table: HashMap<&str, &Vec<f64>> =
                file.items.iter().map(|i| (i.id.as_str(), &i.vec)).collect();
            items
                .iter()
                .map(|item| {
                    let v = table
                        .get(item.as_str())
                        .ok_or_else(|| Error::Embedding(format!("item `{item}` missing from {}", path.display())))?;
                    if v.len() != file.dim {
                        return Err(Error::Embedding(format!(
                            "item `{item}` has dim {}, file declares {}",
                            v.len(),
                            file.dim
                        )));
                    }
                    Ok((*v).clone())
                })
                .collect::<Result<Vec<_>>>()?
        }
        EmbeddingSource::Http {
            base_url,
            model,
            api_key_env,
        } => http_embed(items, base_url, model, api_key_env)?,
        EmbeddingSource::Lexical { dim } => items.iter().map(|t| lexical(t, *dim)).collect(),
    };
    EmbeddingMatrix::new(unique_ids(items), rows)?.normalize()
}

fn unique_ids(items: &[String]) -> Vec<String> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    items
        .iter()
        .map(|item| {
            let n = seen.entry(item.as_str()).or_insert(0);
            let id = if *n == 0 {
                item.clone()
            } else {
                format!("{item}#{n}")
            };
            *n += 1;
            id
        })
        .collect()
}

fn lexical(text: &str, dim: usize) -> Vec<f64> {
    let dim = dim.max(1);
    let mut v = vec![0.0; dim];
    let lower = text.to_lowercase();
    let mut add = |feature: &str, weight: f64| {
        let h = seed::hash_str(feature);
        let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
        v[(h >> 1) as usize % dim] += sign * weight;
    };
    for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
        add(&format!("w:{word}"), 2.0);
        let padded: Vec<char> = format!("^{word}$").chars().collect();
        for tri in padded.windows(3) {
            add(&format!("c:{}", tri.iter().collect::<String>()), 1.0);
        }
    }
    // Keeps punctuation-only inputs embeddable.
    add(&format!("t:{lower}"), 0.1);
    v
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

fn http_embed(items: &[String], base_url: &str, model: &str, key_env: &str) -> Result<Vec<Vec<f64>>> {
    let err = |m: String| Error::Embedding(m);
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(120))
        .build()
        .map_err(|e| err(e.to_string()))?;
    let mut req = client
        .post(format!("{}/embeddings", base_url.trim_end_matches('/')))
        .json(&serde_json::json!({ "model": model, "input": items }));
    if let Ok(key) = std::env::var(key_env) {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| err(e.to_string()))?;
    if !resp.status().is_success() {
        return Err(err(format!("embeddings endpoint returned {}", resp.status())));
    }
    let mut body: EmbeddingResponse = resp.json().map_err(|e| err(e.to_string()))?;
    if body.data.len() != items.len() {
        return Err(err(format!(
            "endpoint returned {} vectors for {} items",
            body.data.len(),
            items.len()
        )));
    }
    if body.data.iter().all(|d| d.index.is_some()) {
        body.data.sort_by_key(|d| d.index);
    }
    Ok(body.data.into_iter().map(|d| d.embedding).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn file_source_passes_through_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.json");
        fs::write(
            &path,
            r#"{"dim":2,"items":[{"id":"a","vec":[3,4]},{"id":"b","vec":[0,2]}]}"#,
        )
        .unwrap();
        let m = embed(&strings(&["b", "a"]), &EmbeddingSource::File { path: path.clone() }).unwrap();
        assert_eq!(m.item_ids, vec!["b", "a"]);
        assert_eq!(m.rows, vec![vec![0.0, 1.0], vec![0.6, 0.8]]);
        assert!(m.normalized);

        let err = embed(&strings(&["zzz"]), &EmbeddingSource::File { path }).unwrap_err();
        assert!(err.to_string().contains("zzz"));
    }

    #[test]
    fn duplicates_get_distinct_ids() {
        let m = embed(&strings(&["x", "y", "x"]), &EmbeddingSource::default()).unwrap();
        assert_eq!(m.item_ids, vec!["x", "y", "x#1"]);
        assert_eq!(m.rows[0], m.rows[2]);
    }

    #[test]
    fn lexical_rows_are_unit_norm_and_similar_words_are_close() {
        let items = strings(&["top_up_failed", "top_up_reverted", "card_arrival"]);
        let m = embed(&items, &EmbeddingSource::Lexical { dim: 128 }).unwrap();
        for r in &m.rows {
            let n: f64 = r.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-6);
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        assert!(dot(&m.rows[0], &m.rows[1]) > dot(&m.rows[0], &m.rows[2]));
    }
}
