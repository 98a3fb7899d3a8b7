//! Judgment cache keyed by `(judge, premise, hypothesis)`.
//!
//! Each key gets its own slot, so concurrent callers asking the same question
//! wait for the first one instead of billing the backend twice. The cache can
//! be persisted as JSONL sorted by the content hash of the key.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GatewayError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub judge: String,
    pub premise: String,
    pub hypothesis: String,
    pub verdict: bool,
}

type Slot = Arc<Mutex<Option<bool>>>;

#[derive(Debug, Default)]
pub struct JudgmentCache {
    slots: Mutex<HashMap<(String, String, String), Slot>>,
}

/// sha256 over the length-prefixed key fields.
pub fn cache_key(judge: &str, premise: &str, hypothesis: &str) -> String {
    let mut h = Sha256::new();
    for part in [judge, premise, hypothesis] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

impl JudgmentCache {
    pub fn get(&self, judge: &str, premise: &str, hypothesis: &str) -> Option<bool> {
        let slot = self
            .slots
            .lock()
            .expect("cache lock")
            .get(&(judge.to_string(), premise.to_string(), hypothesis.to_string()))
            .cloned()?;
        let v = *slot.lock().expect("slot lock");
        v
    }

    pub fn insert(&self, judge: &str, premise: &str, hypothesis: &str, verdict: bool) {
        let slot = self.slot(judge, premise, hypothesis);
        *slot.lock().expect("slot lock") = Some(verdict);
    }

    fn slot(&self, judge: &str, premise: &str, hypothesis: &str) -> Slot {
        self.slots
            .lock()
            .expect("cache lock")
            .entry((judge.to_string(), premise.to_string(), hypothesis.to_string()))
            .or_default()
            .clone()
    }

    /// Returns the cached verdict or computes it with `f`. Failures are not cached.
    pub fn get_or_try_insert(
        &self,
        judge: &str,
        premise: &str,
        hypothesis: &str,
        f: impl FnOnce() -> Result<bool, GatewayError>,
    ) -> Result<bool, GatewayError> {
        let slot = self.slot(judge, premise, hypothesis);
        let mut guard = slot.lock().expect("slot lock");
        if let Some(v) = *guard {
            return Ok(v);
        }
        let v = f()?;
        *guard = Some(v);
        Ok(v)
    }

    /// Number of settled verdicts.
    pub fn len(&self) -> usize {
        self.entries().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Settled entries sorted by key.
    pub fn entries(&self) -> Vec<CacheEntry> {
        let slots: Vec<_> = self
            .slots
            .lock()
            .expect("cache lock")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut out: Vec<CacheEntry> = slots
            .into_iter()
            .filter_map(|((judge, premise, hypothesis), slot)| {
                let verdict = (*slot.lock().expect("slot lock"))?;
                Some(CacheEntry {
                    key: cache_key(&judge, &premise, &hypothesis),
                    judge,
                    premise,
                    hypothesis,
                    verdict,
                })
            })
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.entries()
            .iter()
            .map(|e| serde_json::to_string(e).expect("serializable") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self, GatewayError> {
        let cache = JudgmentCache::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: CacheEntry = serde_json::from_str(line)
                .map_err(|err| GatewayError::Config(format!("judgment cache line {}: {err}", i + 1)))?;
            if e.key != cache_key(&e.judge, &e.premise, &e.hypothesis) {
                return Err(GatewayError::Config(format!(
                    "judgment cache line {}: key does not match content",
                    i + 1
                )));
            }
            cache.insert(&e.judge, &e.premise, &e.hypothesis, e.verdict);
        }
        Ok(cache)
    }

    /// Loads a cache file; a missing file yields an empty cache.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_jsonl(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(GatewayError::Config(format!("{}: {e}", path.display()))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), crate::corpus::CorpusError> {
        crate::corpus::write_file(path, &self.to_jsonl())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    #[test]
    fn computes_once() {
        let cache = JudgmentCache::default();
        let calls = AtomicU32::new(0);
        for _ in 0..3 {
            let v = cache
                .get_or_try_insert("j", "p", "h", || {
                    calls.fetch_add(1, Ordering::SeqCst);
                    Ok(true)
                })
                .unwrap();
            assert!(v);
        }
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn concurrent_callers_share_one_computation() {
        let cache = Arc::new(JudgmentCache::default());
        let calls = Arc::new(AtomicU32::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let cache = cache.clone();
                let calls = calls.clone();
                std::thread::spawn(move || {
                    cache
                        .get_or_try_insert("j", "p", "h", || {
                            calls.fetch_add(1, Ordering::SeqCst);
                            std::thread::sleep(std::time::Duration::from_millis(10));
                            Ok(false)
                        })
                        .unwrap()
                })
            })
            .collect();
        for h in handles {
            assert!(!h.join().unwrap());
        }
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn errors_are_not_cached() {
        let cache = JudgmentCache::default();
        assert!(cache
            .get_or_try_insert("j", "p", "h", || Err(GatewayError::Config("x".into())))
            .is_err());
        assert!(cache.is_empty());
        assert!(cache.get_or_try_insert("j", "p", "h", || Ok(true)).unwrap());
    }

    #[test]
    fn jsonl_roundtrip_is_sorted_and_verified() {
        let cache = JudgmentCache::default();
        cache.insert("j", "b", "c", true);
        cache.insert("j", "a", "c", false);
        let text = cache.to_jsonl();
        let back = JudgmentCache::from_jsonl(&text).unwrap();
        assert_eq!(back.to_jsonl(), text);
        assert_eq!(back.get("j", "a", "c"), Some(false));
        let tampered = text.replacen("\"premise\":\"b\"", "\"premise\":\"z\"", 1);
        assert!(JudgmentCache::from_jsonl(&tampered).is_err());
    }

    #[test]
    fn key_separates_fields() {
        assert_ne!(cache_key("j", "ab", "c"), cache_key("j", "a", "bc"));
    }
}
