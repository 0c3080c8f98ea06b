//! Label catalogs: the ordered option set a classifier chooses from.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stable identifier of a label. It is the dataset's surface string with
/// outer whitespace trimmed; case is preserved because prompts show it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(String);

impl LabelId {
    pub fn new(raw: impl AsRef<str>) -> Self {
        LabelId(raw.as_ref().trim().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LabelId {
    fn from(s: &str) -> Self {
        LabelId::new(s)
    }
}

impl From<String> for LabelId {
    fn from(s: String) -> Self {
        LabelId::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub id: LabelId,
    pub surface: String,
}

/// Ordered, non-empty set of labels with unique ids.
///
/// Serializes as a plain JSON array of label strings; order is significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCatalog {
    labels: Vec<Label>,
    index: HashMap<LabelId, usize>,
    pub domain_tag: Option<String>,
}

impl LabelCatalog {
    pub fn new<I, S>(surfaces: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut labels = Vec::new();
        let mut index = HashMap::new();
        for raw in surfaces {
            let id = LabelId::new(raw.as_ref());
            if id.as_str().is_empty() {
                return Err(Error::Catalog(format!(
                    "label #{} is blank",
                    labels.len()
                )));
            }
            if index.insert(id.clone(), labels.len()).is_some() {
                return Err(Error::Catalog(format!("duplicate label `{id}`")));
            }
            labels.push(Label {
                surface: id.as_str().to_string(),
                id,
            });
        }
        if labels.is_empty() {
            return Err(Error::Catalog("no labels".into()));
        }
        Ok(LabelCatalog {
            labels,
            index,
            domain_tag: None,
        })
    }

    pub fn with_domain_tag(mut self, tag: impl Into<String>) -> Self {
        self.domain_tag = Some(tag.into());
        self
    }

    /// Reads a catalog stored as a JSON array of label strings.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let surfaces: Vec<String> = serde_json::from_str(&raw)?;
        Self::new(surfaces)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = serde_json::to_string_pretty(&self.surfaces())?;
        fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn ids(&self) -> Vec<LabelId> {
        self.labels.iter().map(|l| l.id.clone()).collect()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.labels.iter().map(|l| l.surface.as_str()).collect()
    }

    pub fn position(&self, id: &LabelId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &LabelId) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &LabelId) -> Option<&Label> {
        self.position(id).map(|i| &self.labels[i])
    }

    pub fn surface<'a>(&'a self, id: &'a LabelId) -> &'a str {
        self.get(id).map(|l| l.surface.as_str()).unwrap_or(id.as_str())
    }

    pub fn require(&self, id: &LabelId) -> Result<usize> {
        self.position(id).ok_or_else(|| Error::UnknownLabel(id.clone()))
    }
}

impl Serialize for LabelCatalog {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.surfaces().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LabelCatalog {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let surfaces = Vec::<String>::deserialize(deserializer)?;
        LabelCatalog::new(surfaces).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trims_but_keeps_case() {
        let c = LabelCatalog::new([" pending_top_up ", "Card_Arrival"]).unwrap();
        assert_eq!(c.surfaces(), vec!["pending_top_up", "Card_Arrival"]);
        assert_eq!(c.position(&"Card_Arrival".into()), Some(1));
        assert_eq!(c.position(&"card_arrival".into()), None);
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        assert!(LabelCatalog::new(["a", " a"]).is_err());
        assert!(LabelCatalog::new(Vec::<String>::new()).is_err());
        assert!(LabelCatalog::new(["a", "  "]).is_err());
    }

    #[test]
    fn json_round_trip_preserves_order() {
        let c = LabelCatalog::new(["z", "a", "m"]).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"["z","a","m"]"#);
        let back: LabelCatalog = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
