//! Content-addressed reply cache persisted as JSON files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::query::{ModelQuery, ModelReply};

/// Bumped whenever prompt rendering changes, so stale replies stop matching.
const PROMPT_VERSION: u32 = 1;

/// Key over (backend id, canonical query encoding, decoding parameters). The
/// rendered prompt is a pure function of the query, so the encoding covers it.
pub fn cache_key(backend_id: &str, query: &ModelQuery) -> String {
    let mut h = Sha256::new();
    h.update(PROMPT_VERSION.to_le_bytes());
    h.update(backend_id.as_bytes());
    h.update([0u8]);
    h.update(serde_json::to_vec(query).expect("query serializes"));
    hex::encode(h.finalize())
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    reply: ModelReply,
}

pub struct ReplyCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl ReplyCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ReplyCache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// A corrupt entry counts as a miss.
    pub fn get(&self, key: &str) -> Option<ModelReply> {
        let path = self.path_for(key);
        let raw = fs::read(&path).ok()?;
        match serde_json::from_slice::<Entry>(&raw) {
            Ok(entry) if entry.key == key => Some(entry.reply),
            Ok(_) => {
                tracing::warn!(path = %path.display(), "cache entry key mismatch; ignoring");
                None
            }
            Err(e) => {
                tracing::warn!(path = %path.display(), "corrupt cache entry ({e}); ignoring");
                None
            }
        }
    }

    pub fn put(&self, key: &str, reply: &ModelReply) {
        let path = self.path_for(key);
        let entry = Entry {
            key: key.to_string(),
            reply: reply.clone(),
        };
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        let write = || -> std::io::Result<()> {
            let parent = path.parent().expect("entry has a parent dir");
            fs::create_dir_all(parent)?;
            let tmp = parent.join(format!(".{key}.tmp"));
            fs::write(&tmp, serde_json::to_vec_pretty(&entry).map_err(std::io::Error::other)?)?;
            fs::rename(&tmp, &path)
        };
        if let Err(e) = write() {
            tracing::warn!(path = %path.display(), "failed to store cache entry: {e}");
        }
    }
}
