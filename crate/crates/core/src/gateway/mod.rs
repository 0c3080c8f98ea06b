//! Uniform access to decision-making backends, with reply caching and call
//! accounting.

mod cache;
mod http;
mod oracle;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

pub use cache::{cache_key, ReplyCache};
pub use http::{HttpBackend, HttpConfig};
pub use oracle::{CountCurve, ScriptedOracle, ScriptedOracleConfig, SimilarityMatrix};

use crate::error::Result;
use crate::query::{ModelQuery, ModelReply};

pub trait Backend: Send + Sync {
    /// Stable identity; part of every cache key.
    fn id(&self) -> String;

    fn complete(&self, query: &ModelQuery) -> Result<ModelReply>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallStats {
    pub invocations: u64,
    pub cache_hits: u64,
    pub backend_calls: u64,
    pub failures: u64,
}

#[derive(Default)]
struct Counters {
    invocations: AtomicU64,
    cache_hits: AtomicU64,
    backend_calls: AtomicU64,
    failures: AtomicU64,
}

/// Counting semaphore bounding in-flight backend calls.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("limiter poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// Front door for every model call in the pipeline.
///
/// `backend_calls == invocations - cache_hits` always holds.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    backend_id: String,
    cache: Option<ReplyCache>,
    limiter: Limiter,
    counters: Counters,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        let backend_id = backend.id();
        Gateway {
            backend,
            backend_id,
            cache: None,
            limiter: Limiter::new(8),
            counters: Counters::default(),
        }
    }

    pub fn with_cache(mut self, cache: ReplyCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.limiter = Limiter::new(n);
        self
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    /// Answers `query`, from the cache when possible.
    pub fn complete(&self, query: &ModelQuery) -> Result<ModelReply> {
        query.validate()?;
        self.counters.invocations.fetch_add(1, Ordering::Relaxed);
        let key = match &self.cache {
            Some(cache) => {
                let key = cache_key(&self.backend_id, query);
                if let Some(hit) = cache.get(&key) {
                    self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(hit);
                }
                Some(key)
            }
            None => None,
        };
        self.counters.backend_calls.fetch_add(1, Ordering::Relaxed);
        let reply = {
            let _permit = self.limiter.acquire();
            self.backend.complete(query)
        };
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                self.counters.failures.fetch_add(1, Ordering::Relaxed);
                return Err(e);
            }
        };
        if let (Some(cache), Some(key)) = (&self.cache, key) {
            cache.put(&key, &reply);
        }
        Ok(reply)
    }

    pub fn stats(&self) -> CallStats {
        CallStats {
            invocations: self.counters.invocations.load(Ordering::Relaxed),
            cache_hits: self.counters.cache_hits.load(Ordering::Relaxed),
            backend_calls: self.counters.backend_calls.load(Ordering::Relaxed),
            failures: self.counters.failures.load(Ordering::Relaxed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::LabelId;
    use crate::query::Decoding;

    struct Echo;

    impl Backend for Echo {
        fn id(&self) -> String {
            "echo".into()
        }
        fn complete(&self, q: &ModelQuery) -> Result<ModelReply> {
            Ok(ModelReply {
                text: format!("LABEL: {}", q.options[0]),
                latency_ms: 1.5,
                token_usage: None,
                backend_id: "echo".into(),
            })
        }
    }

    fn q() -> ModelQuery {
        ModelQuery::full_choice("x", vec![LabelId::new("a"), LabelId::new("b")], false, None)
    }

    #[test]
    fn second_identical_call_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(Arc::new(Echo)).with_cache(ReplyCache::new(dir.path()).unwrap());
        let a = gw.complete(&q()).unwrap();
        let b = gw.complete(&q()).unwrap();
        assert_eq!(a, b);
        let s = gw.stats();
        assert_eq!((s.invocations, s.cache_hits, s.backend_calls), (2, 1, 1));
    }

    #[test]
    fn temperature_changes_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(Arc::new(Echo)).with_cache(ReplyCache::new(dir.path()).unwrap());
        gw.complete(&q()).unwrap();
        let hot = q().with_decoding(Decoding {
            temperature: 0.7,
            ..Decoding::default()
        });
        gw.complete(&hot).unwrap();
        assert_eq!(gw.stats().backend_calls, 2);
    }

    #[test]
    fn without_cache_every_call_reaches_backend() {
        let gw = Gateway::new(Arc::new(Echo));
        gw.complete(&q()).unwrap();
        gw.complete(&q()).unwrap();
        assert_eq!(gw.stats().backend_calls, 2);
        assert_eq!(gw.stats().cache_hits, 0);
    }

    #[test]
    fn invalid_query_is_rejected_before_backend() {
        let gw = Gateway::new(Arc::new(Echo));
        let bad = ModelQuery::reduce_topk("x", vec![], 1);
        assert!(gw.complete(&bad).is_err());
        assert_eq!(gw.stats().backend_calls, 0);
    }
}
