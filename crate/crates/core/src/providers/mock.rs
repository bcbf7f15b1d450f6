use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::RwLock;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, ProviderError, TransportError};

const HASH_PREFIX: &str = "sha256:";

/// A canned response. `key` is either the full prompt, `sha256:<hex>` of
/// the prompt, or a prompt prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixture {
    pub key: String,
    pub response: String,
}

impl Fixture {
    pub fn new(key: impl Into<String>, response: impl Into<String>) -> Self {
        Fixture { key: key.into(), response: response.into() }
    }

    pub fn hashed(prompt: &str, response: impl Into<String>) -> Self {
        Fixture { key: prompt_hash(prompt), response: response.into() }
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    format!("{HASH_PREFIX}{}", hex::encode(Sha256::digest(prompt.as_bytes())))
}

/// Deterministic offline backend. Lookup order: exact key, hash key,
/// longest matching prefix, then a labeled stub derived from the prompt.
pub struct MockBackend {
    name: String,
    fixtures: RwLock<BTreeMap<String, String>>,
    fail_first: AtomicU32,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(name: impl Into<String>) -> Self {
        MockBackend {
            name: name.into(),
            fixtures: RwLock::new(BTreeMap::new()),
            fail_first: AtomicU32::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_fixtures(name: impl Into<String>, fixtures: Vec<Fixture>) -> Result<Self, ProviderError> {
        let mock = Self::new(name);
        mock.load(fixtures)?;
        Ok(mock)
    }

    /// The next `n` calls fail with a retryable transport error.
    pub fn failing_first(self, n: u32) -> Self {
        self.fail_first.store(n, Ordering::SeqCst);
        self
    }

    pub fn fail_next(&self, n: u32) {
        self.fail_first.store(n, Ordering::SeqCst);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn load(&self, fixtures: Vec<Fixture>) -> Result<(), ProviderError> {
        let mut map = self.fixtures.write().unwrap();
        let mut staged = map.clone();
        for f in fixtures {
            if staged.contains_key(&f.key) {
                return Err(ProviderError::DuplicateFixtureKey(f.key));
            }
            staged.insert(f.key, f.response);
        }
        *map = staged;
        Ok(())
    }

    pub fn load_json(&self, json: &str) -> Result<(), ProviderError> {
        let fixtures: Vec<Fixture> =
            serde_json::from_str(json).map_err(|e| ProviderError::Config(format!("fixtures: {e}")))?;
        self.load(fixtures)
    }

    pub fn lookup(&self, prompt: &str) -> Option<String> {
        let map = self.fixtures.read().unwrap();
        if let Some(r) = map.get(prompt) {
            return Some(r.clone());
        }
        if let Some(r) = map.get(&prompt_hash(prompt)) {
            return Some(r.clone());
        }
        map.iter()
            .filter(|(k, _)| !k.starts_with(HASH_PREFIX) && prompt.starts_with(k.as_str()))
            .max_by_key(|(k, _)| k.len())
            .map(|(_, r)| r.clone())
    }
}

#[async_trait]
impl Backend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    async fn complete(&self, prompt: &str, _context: Option<&str>) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let pending = self.fail_first.load(Ordering::SeqCst);
        if pending > 0 {
            self.fail_first.store(pending - 1, Ordering::SeqCst);
            return Err(TransportError::retryable("injected failure"));
        }
        Ok(self.lookup(prompt).unwrap_or_else(|| {
            let hash = prompt_hash(prompt);
            format!("[mock stub] no fixture for prompt {}", &hash[HASH_PREFIX.len()..][..16])
        }))
    }
}
