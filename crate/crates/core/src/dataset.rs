//! JSON-Lines datasets of `{text, label, margin?}` records.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{LabelCatalog, LabelId};
use crate::error::{Error, Result};

/// One input to classify, with its gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Zero-based position in the file it was loaded from.
    #[serde(skip)]
    pub id: usize,
    pub text: String,
    #[serde(rename = "label")]
    pub gold: LabelId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

impl Instance {
    pub fn new(id: usize, text: impl Into<String>, gold: impl Into<LabelId>) -> Self {
        Instance {
            id,
            text: text.into(),
            gold: gold.into(),
            margin: None,
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    text: String,
    label: String,
    #[serde(default)]
    margin: Option<f64>,
}

/// Loads a dataset, validating every record against `catalog`. Blank lines
/// are skipped; diagnostics carry 1-based line numbers.
pub fn load_dataset(path: impl AsRef<Path>, catalog: &LabelCatalog) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&raw, catalog).map_err(|(line, message)| Error::Record {
        path: path.to_path_buf(),
        line,
        message,
    })
}

fn parse_dataset(
    raw: &str,
    catalog: &LabelCatalog,
) -> std::result::Result<Vec<Instance>, (usize, String)> {
    let mut out = Vec::new();
    for (n, line) in raw.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord =
            serde_json::from_str(line).map_err(|e| (line_no, format!("malformed record: {e}")))?;
        let gold = LabelId::new(&rec.label);
        if !catalog.contains(&gold) {
            return Err((line_no, format!("unknown label `{}`", rec.label)));
        }
        if rec.text.trim().is_empty() {
            return Err((line_no, "empty text".into()));
        }
        if let Some(m) = rec.margin {
            if !(0.0..=1.0).contains(&m) {
                return Err((line_no, format!("margin {m} outside [0, 1]")));
            }
        }
        out.push(Instance {
            id: out.len(),
            text: rec.text,
            gold,
            margin: rec.margin,
        });
    }
    if out.is_empty() {
        return Err((0, "dataset contains no records".into()));
    }
    Ok(out)
}

pub fn save_dataset(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for inst in instances {
        serde_json::to_writer(&mut buf, inst)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> LabelCatalog {
        LabelCatalog::new(["pending_top_up", "top_up_failed"]).unwrap()
    }

    #[test]
    fn keeps_file_order() {
        let raw = "{\"text\":\"b\",\"label\":\"top_up_failed\"}\n{\"text\":\"a\",\"label\":\"pending_top_up\"}\n";
        let got = parse_dataset(raw, &catalog()).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].text, "b");
        assert_eq!(got[1].gold.as_str(), "pending_top_up");
        assert_eq!(got[1].id, 1);
    }

    #[test]
    fn banking_style_record() {
        let raw = r#"{"text":"So I just put my top-up into the card and it hasn't changed.","label":"pending_top_up"}"#;
        let got = parse_dataset(raw, &catalog()).unwrap();
        assert_eq!(got[0].gold, LabelId::new("pending_top_up"));
    }

    #[test]
    fn unknown_label_names_line() {
        let raw = "{\"text\":\"a\",\"label\":\"pending_top_up\"}\n{\"text\":\"b\",\"label\":\"no_such_label\"}\n";
        let (line, msg) = parse_dataset(raw, &catalog()).unwrap_err();
        assert_eq!(line, 2);
        assert!(msg.contains("no_such_label"));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse_dataset("", &catalog()).is_err());
        assert!(parse_dataset("\n\n", &catalog()).is_err());
    }

    #[test]
    fn margin_is_range_checked() {
        let raw = r#"{"text":"a","label":"pending_top_up","margin":1.5}"#;
        assert!(parse_dataset(raw, &catalog()).is_err());
    }
}
