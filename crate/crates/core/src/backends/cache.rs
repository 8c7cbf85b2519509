//! Content-addressed response cache.
//!
//! Entries live as `<digest>.txt` next to `<digest>.meta.json` (the request
//! snapshot) under a run-independent directory. Eviction is manual: the
//! workloads this serves re-run identical prompts constantly, and a stale
//! entry is impossible by construction (the key covers the full request).

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{BackendConfig, ChatMessage, SamplingParams};

/// Digest over (kind, model, canonicalized messages, temperature, max_tokens).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn for_request(
        config: &BackendConfig,
        messages: &[ChatMessage],
        params: SamplingParams,
    ) -> CacheKey {
        #[derive(Serialize)]
        struct Canonical<'a> {
            kind: super::BackendKind,
            model: &'a str,
            messages: &'a [ChatMessage],
            temperature: f64,
            max_tokens: u32,
        }
        let canonical = serde_json::to_vec(&Canonical {
            kind: config.kind,
            model: &config.model_name,
            messages,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        })
        .expect("canonical request serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        CacheKey(crate::corpus::hex(&hasher.finalize()))
    }

    pub fn digest(&self) -> &str {
        &self.0
    }
}

pub struct Cache {
    root: PathBuf,
}

static STORE_COUNTER: AtomicU64 = AtomicU64::new(0);

impl Cache {
    /// Opens (creating if needed) a cache rooted at `root`.
    pub fn open(root: &Path) -> std::io::Result<Cache> {
        std::fs::create_dir_all(root)?;
        Ok(Cache {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn value_path(&self, key: &CacheKey) -> PathBuf {
        self.root.join(format!("{}.txt", key.digest()))
    }

    pub fn lookup(&self, key: &CacheKey) -> std::io::Result<Option<String>> {
        match std::fs::read_to_string(self.value_path(key)) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Stores a value and its request snapshot. Concurrent stores of the same
    /// key are safe: writes go to a unique temp file and land with an atomic
    /// rename, last writer wins.
    pub fn store(
        &self,
        key: &CacheKey,
        value: &str,
        config: &BackendConfig,
        messages: &[ChatMessage],
        params: SamplingParams,
    ) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Meta<'a> {
            digest: &'a str,
            kind: super::BackendKind,
            model: &'a str,
            temperature: f64,
            max_tokens: u32,
            messages: &'a [ChatMessage],
            stored_at_unix: u64,
        }
        let meta = serde_json::to_string_pretty(&Meta {
            digest: key.digest(),
            kind: config.kind,
            model: &config.model_name,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            messages,
            stored_at_unix: crate::corpus::now_unix(),
        })
        .expect("meta serializes");

        self.write_atomic(&self.value_path(key), value.as_bytes())?;
        self.write_atomic(
            &self.root.join(format!("{}.meta.json", key.digest())),
            meta.as_bytes(),
        )
    }

    fn write_atomic(&self, dest: &Path, bytes: &[u8]) -> std::io::Result<()> {
        let unique = STORE_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = self.root.join(format!(
            ".tmp-{}-{}-{}",
            std::process::id(),
            unique,
            dest.file_name().and_then(|n| n.to_str()).unwrap_or("f")
        ));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendKind, ChatRole};

    fn msg(content: &str) -> Vec<ChatMessage> {
        vec![ChatMessage {
            role: ChatRole::User,
            content: content.into(),
        }]
    }

    fn params() -> SamplingParams {
        SamplingParams {
            temperature: 0.0,
            max_tokens: 64,
        }
    }

    #[test]
    fn lookup_after_store() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let config = BackendConfig::mock("m");
        let key = CacheKey::for_request(&config, &msg("hello"), params());
        assert_eq!(cache.lookup(&key).unwrap(), None);
        cache
            .store(&key, "abc", &config, &msg("hello"), params())
            .unwrap();
        assert_eq!(cache.lookup(&key).unwrap(), Some("abc".to_string()));
        // Meta snapshot lands beside the value.
        assert!(dir
            .path()
            .join(format!("{}.meta.json", key.digest()))
            .exists());
    }

    #[test]
    fn key_sensitive_to_every_field() {
        let config = BackendConfig::mock("m");
        let base = CacheKey::for_request(&config, &msg("x"), params());
        let other_msg = CacheKey::for_request(&config, &msg("y"), params());
        let other_temp = CacheKey::for_request(
            &config,
            &msg("x"),
            SamplingParams {
                temperature: 0.2,
                max_tokens: 64,
            },
        );
        let other_model = CacheKey::for_request(&BackendConfig::mock("m2"), &msg("x"), params());
        let http_config = BackendConfig {
            kind: BackendKind::HttpChat,
            base_url: Some("http://localhost".into()),
            ..BackendConfig::mock("m")
        };
        let other_kind = CacheKey::for_request(&http_config, &msg("x"), params());
        for other in [&other_msg, &other_temp, &other_model, &other_kind] {
            assert_ne!(&base, other);
        }
        assert_eq!(base, CacheKey::for_request(&config, &msg("x"), params()));
    }

    #[test]
    fn concurrent_stores_of_same_key_leave_one_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cache = std::sync::Arc::new(Cache::open(dir.path()).unwrap());
        let config = BackendConfig::mock("m");
        let key = CacheKey::for_request(&config, &msg("race"), params());
        std::thread::scope(|scope| {
            for _ in 0..8 {
                let cache = cache.clone();
                let key = key.clone();
                let config = config.clone();
                scope.spawn(move || {
                    for _ in 0..50 {
                        cache
                            .store(&key, "abc", &config, &msg("race"), params())
                            .unwrap();
                    }
                });
            }
        });
        assert_eq!(cache.lookup(&key).unwrap(), Some("abc".to_string()));
        let values = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .ends_with(".txt")
            })
            .count();
        assert_eq!(values, 1);
    }

    #[test]
    fn distinct_requests_distinct_digests() {
        let config = BackendConfig::mock("m");
        let mut seen = std::collections::HashSet::with_capacity(100_000);
        for i in 0..100_000 {
            let key = CacheKey::for_request(&config, &msg(&format!("req {i}")), params());
            assert!(seen.insert(key.digest().to_string()), "collision at {i}");
        }
    }
}
