use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use lru::LruCache;
use serde::{Deserialize, Serialize};

use super::handler::QueryTrace;
use crate::store::canonicalize_name;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedAnswer {
    pub answer: String,
    pub trace: QueryTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub len: usize,
    pub capacity: usize,
}

/// Bounded least-recently-used response cache. Capacity 0 disables it.
#[derive(Debug)]
pub struct ResponseCache {
    inner: Option<Mutex<LruCache<String, CachedAnswer>>>,
    capacity: usize,
    hits: AtomicU64,
    misses: AtomicU64,
}

/// Canonical question joined with the resolved location names.
pub fn cache_key(question: &str, locations: &[String]) -> String {
    format!("{}|{}", canonicalize_name(question), locations.join(";"))
}

impl ResponseCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: NonZeroUsize::new(capacity).map(|c| Mutex::new(LruCache::new(c))),
            capacity,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn get(&self, key: &str) -> Option<CachedAnswer> {
        let found = self.inner.as_ref().and_then(|m| m.lock().expect("cache poisoned").get(key).cloned());
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    pub fn put(&self, key: String, answer: String, trace: QueryTrace) {
        if let Some(m) = &self.inner {
            m.lock().expect("cache poisoned").put(key, CachedAnswer { answer, trace });
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.inner.as_ref().is_some_and(|m| m.lock().expect("cache poisoned").contains(key))
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            len: self.inner.as_ref().map_or(0, |m| m.lock().expect("cache poisoned").len()),
            capacity: self.capacity,
        }
    }
}
