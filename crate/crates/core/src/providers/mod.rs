//! Text-generation providers addressed by role.
//!
//! Every pipeline step names a [`Role`]; the [`ProviderHub`] resolves it to
//! a configured [`Backend`], applies the retry policy and size cap, and
//! appends a [`TranscriptEntry`] for each completed call.

mod config;
mod live;
mod mock;
mod transcript;

pub use config::{BackendConfig, ProviderConfig, RetrySettings, RoleBinding};
pub use live::LiveBackend;
pub use mock::{Fixture, MockBackend};
pub use transcript::{read_transcript_lines, TranscriptEntry, TranscriptLog};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use chrono::Utc;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::item_model::{SessionId, TranscriptId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    ConceptMapper,
    QuestionWriter,
    ItemWriter(u8),
    Evaluator,
    FeatureExtractor,
}

impl Role {
    pub fn item_writers(count: u8) -> Vec<Role> {
        (1..=count).map(Role::ItemWriter).collect()
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::ConceptMapper => f.write_str("concept_mapper"),
            Role::QuestionWriter => f.write_str("question_writer"),
            Role::ItemWriter(n) => write!(f, "item_writer_{n}"),
            Role::Evaluator => f.write_str("evaluator"),
            Role::FeatureExtractor => f.write_str("feature_extractor"),
        }
    }
}

impl FromStr for Role {
    type Err = ProviderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concept_mapper" => Ok(Role::ConceptMapper),
            "question_writer" => Ok(Role::QuestionWriter),
            "evaluator" => Ok(Role::Evaluator),
            "feature_extractor" => Ok(Role::FeatureExtractor),
            other => other
                .strip_prefix("item_writer_")
                .and_then(|n| n.parse::<u8>().ok())
                .filter(|n| *n >= 1)
                .map(Role::ItemWriter)
                .ok_or_else(|| ProviderError::UnconfiguredRole(other.to_string())),
        }
    }
}

impl Serialize for Role {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    pub retryable: bool,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        TransportError { message: message.into(), retryable: true }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        TransportError { message: message.into(), retryable: false }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("role `{0}` is not configured")]
    UnconfiguredRole(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("{role}: gave up after {attempts} attempts: {last_error}")]
    RetriesExhausted { role: String, attempts: u32, last_error: String },
    #[error("{role}: backend refused the request: {message}")]
    Rejected { role: String, message: String },
    #[error("{role}: response of {size} bytes exceeds the {cap}-byte cap")]
    ResponseTooLarge { role: String, size: usize, cap: usize },
    #[error("duplicate fixture key `{0}`")]
    DuplicateFixtureKey(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

/// A text-generation endpoint. The context attachment, when present, is a
/// separate document the backend must make available alongside the prompt.
#[async_trait]
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    async fn complete(&self, prompt: &str, context: Option<&str>) -> Result<String, TransportError>;
}

/// The attached context travels as a delimited preamble block.
pub fn compose_prompt(prompt: &str, context: Option<&str>) -> String {
    match context {
        Some(ctx) => format!("<<<ATTACHED CONTEXT\n{ctx}\nATTACHED CONTEXT>>>\n\n{prompt}"),
        None => prompt.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before retry k (0-based) is `base_delay * 2^k`.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy { max_retries, base_delay: Duration::ZERO }
    }

    pub fn delay_before_retry(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

pub const DEFAULT_MAX_RESPONSE_BYTES: usize = 256 * 1024;

#[derive(Debug, Clone)]
pub struct Dispatched {
    pub response: String,
    pub entry: TranscriptEntry,
}

pub struct ProviderHub {
    roles: BTreeMap<Role, Arc<dyn Backend>>,
    retry: RetryPolicy,
    max_response_bytes: usize,
    transcripts: Arc<TranscriptLog>,
}

impl ProviderHub {
    pub fn new() -> Self {
        ProviderHub {
            roles: BTreeMap::new(),
            retry: RetryPolicy::default(),
            max_response_bytes: DEFAULT_MAX_RESPONSE_BYTES,
            transcripts: Arc::new(TranscriptLog::new()),
        }
    }

    pub fn with_role(mut self, role: Role, backend: Arc<dyn Backend>) -> Self {
        self.roles.insert(role, backend);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_response_bytes(mut self, cap: usize) -> Self {
        self.max_response_bytes = cap;
        self
    }

    pub fn with_transcripts(mut self, log: Arc<TranscriptLog>) -> Self {
        self.transcripts = log;
        self
    }

    pub fn transcripts(&self) -> &Arc<TranscriptLog> {
        &self.transcripts
    }

    pub fn is_configured(&self, role: &Role) -> bool {
        self.roles.contains_key(role)
    }

    pub fn configured_roles(&self) -> impl Iterator<Item = &Role> {
        self.roles.keys()
    }

    /// Item writer roles that have a backend, in numeric order.
    pub fn item_writer_roles(&self) -> Vec<Role> {
        self.roles.keys().filter(|r| matches!(r, Role::ItemWriter(_))).cloned().collect()
    }

    pub fn resolve(&self, name: &str) -> Result<Role, ProviderError> {
        let role: Role = name.parse()?;
        if self.is_configured(&role) {
            Ok(role)
        } else {
            Err(ProviderError::UnconfiguredRole(name.to_string()))
        }
    }

    pub async fn dispatch(
        &self,
        role: &Role,
        prompt: &str,
        context: Option<&str>,
    ) -> Result<Dispatched, ProviderError> {
        self.dispatch_for(None, role, prompt, context).await
    }

    pub async fn dispatch_named(
        &self,
        role: &str,
        prompt: &str,
        context: Option<&str>,
    ) -> Result<Dispatched, ProviderError> {
        let role = self.resolve(role)?;
        self.dispatch(&role, prompt, context).await
    }

    /// Sends `prompt` to the backend bound to `role`, retrying transport
    /// failures with exponential backoff. The response is returned verbatim.
    pub async fn dispatch_for(
        &self,
        session: Option<&SessionId>,
        role: &Role,
        prompt: &str,
        context: Option<&str>,
    ) -> Result<Dispatched, ProviderError> {
        let backend = self
            .roles
            .get(role)
            .ok_or_else(|| ProviderError::UnconfiguredRole(role.to_string()))?;
        if prompt.trim().is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }

        let started = Instant::now();
        let mut retry_count = 0;
        let response = loop {
            match backend.complete(prompt, context).await {
                Ok(text) => break text,
                Err(err) if !err.retryable => {
                    return Err(ProviderError::Rejected {
                        role: role.to_string(),
                        message: err.message,
                    });
                }
                Err(err) => {
                    if retry_count >= self.retry.max_retries {
                        return Err(ProviderError::RetriesExhausted {
                            role: role.to_string(),
                            attempts: retry_count + 1,
                            last_error: err.message,
                        });
                    }
                    let delay = self.retry.delay_before_retry(retry_count);
                    tracing::warn!(%role, retry = retry_count + 1, ?delay, error = %err, "retrying dispatch");
                    if !delay.is_zero() {
                        tokio::time::sleep(delay).await;
                    }
                    retry_count += 1;
                }
            }
        };

        if response.len() > self.max_response_bytes {
            return Err(ProviderError::ResponseTooLarge {
                role: role.to_string(),
                size: response.len(),
                cap: self.max_response_bytes,
            });
        }

        let entry = TranscriptEntry {
            id: TranscriptId::generate(),
            session_id: session.cloned(),
            role: role.to_string(),
            backend: backend.name().to_string(),
            prompt: prompt.to_string(),
            context: context.map(str::to_string),
            response: response.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            timestamp: Utc::now(),
            retry_count,
        };
        self.transcripts.append(entry.clone());
        Ok(Dispatched { response, entry })
    }
}

impl Default for ProviderHub {
    fn default() -> Self {
        Self::new()
    }
}
