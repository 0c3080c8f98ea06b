//! Append-only JSON-Lines transcript persistence.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::InstanceRecord;
use crate::error::{Error, Result};

/// Reads a transcript file. A torn final line (from an interrupted write)
/// is ignored; a malformed line elsewhere is an error.
pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<InstanceRecord>> {
    let path = path.as_ref();
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse(path, &raw)?.0)
}

/// Records plus the byte length of the intact prefix.
fn parse(path: &Path, raw: &str) -> Result<(Vec<InstanceRecord>, usize)> {
    let mut out = Vec::new();
    let mut good = 0;
    let mut offset = 0;
    let lines: Vec<&str> = raw.split_inclusive('\n').collect();
    for (i, line) in lines.iter().enumerate() {
        offset += line.len();
        if line.trim().is_empty() {
            good = offset;
            continue;
        }
        match serde_json::from_str::<InstanceRecord>(line) {
            Ok(r) if line.ends_with('\n') => {
                out.push(r);
                good = offset;
            }
            _ if i + 1 == lines.len() => {
                tracing::warn!(path = %path.display(), "ignoring torn final transcript line");
            }
            Ok(_) => unreachable!("only the last line can lack a newline"),
            Err(e) => {
                return Err(Error::Record {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((out, good))
}

pub struct TranscriptLog {
    path: PathBuf,
    existing: Vec<InstanceRecord>,
    file: Mutex<(File, Vec<InstanceRecord>)>,
}

impl TranscriptLog {
    /// Opens `path` for appending, loading what is already there and cutting
    /// off a torn final line.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let existing = if path.exists() {
            let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let (records, good) = parse(&path, &raw)?;
            if good < raw.len() {
                let f = OpenOptions::new().write(true).open(&path).map_err(|e| Error::io(&path, e))?;
                f.set_len(good as u64).map_err(|e| Error::io(&path, e))?;
            }
            records
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(TranscriptLog {
            path,
            existing,
            file: Mutex::new((file, Vec::new())),
        })
    }

    pub fn existing(&self) -> &[InstanceRecord] {
        &self.existing
    }

    /// Appends one record as a complete line.
    pub fn append(&self, record: &InstanceRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let mut guard = self.file.lock().expect("transcript log poisoned");
        guard.0.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        guard.0.flush().map_err(|e| Error::io(&self.path, e))?;
        guard.1.push(record.clone());
        Ok(())
    }

    /// Rewrites the file sorted by (repeat, instance, method) and returns
    /// the records accepted by `keep`.
    pub fn finish(self, keep: impl Fn(&InstanceRecord) -> bool) -> Result<Vec<InstanceRecord>> {
        let (file, appended) = self.file.into_inner().expect("transcript log poisoned");
        drop(file);
        let mut seen = HashSet::new();
        let mut all: Vec<InstanceRecord> = self
            .existing
            .into_iter()
            .chain(appended)
            .filter(|r| seen.insert(r.key()))
            .collect();
        all.sort_by(|a, b| {
            (a.repeat, a.instance, &a.method).cmp(&(b.repeat, b.instance, &b.method))
        });
        let mut buf = String::new();
        for r in &all {
            buf.push_str(&serde_json::to_string(r)?);
            buf.push('\n');
        }
        let tmp = self.path.with_extension("jsonl.tmp");
        fs::write(&tmp, buf).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &self.path).map_err(|e| Error::io(&self.path, e))?;
        Ok(all.into_iter().filter(|r| keep(r)).collect())
    }
}
