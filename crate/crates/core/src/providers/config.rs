use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, LiveBackend, MockBackend, ProviderError, ProviderHub, RetryPolicy, Role};
use crate::samples;

/// Provider configuration file.
///
/// ```toml
/// [retry]
/// max_retries = 3
/// base_delay_ms = 1000
///
/// [backends.offline]
/// kind = "mock"
/// builtin = true
///
/// [backends.chat]
/// kind = "live"
/// base_url = "https://api.example.com/v1"
/// model = "some-model"
/// api_key_env = "CHAT_API_KEY"
///
/// [roles]
/// concept_mapper = "chat"
/// item_writer_1 = { backend = "chat", model = "other-model" }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    #[serde(default)]
    pub retry: RetrySettings,
    #[serde(default = "default_max_response_bytes")]
    pub max_response_bytes: usize,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub roles: BTreeMap<String, RoleBinding>,
}

fn default_max_response_bytes() -> usize {
    super::DEFAULT_MAX_RESPONSE_BYTES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrySettings {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetrySettings {
    fn default() -> Self {
        RetrySettings { max_retries: 3, base_delay_ms: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Live {
        base_url: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default)]
        temperature: Option<f64>,
    },
    Mock {
        /// JSON array of `{key, response}` objects, relative to the config file.
        #[serde(default)]
        fixtures: Option<PathBuf>,
        /// Load the bundled sample fixtures for each bound role.
        #[serde(default)]
        builtin: bool,
    },
}

fn default_timeout_ms() -> u64 {
    60_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoleBinding {
    Backend(String),
    Detailed {
        backend: String,
        #[serde(default)]
        model: Option<String>,
    },
}

impl RoleBinding {
    pub fn backend(&self) -> &str {
        match self {
            RoleBinding::Backend(b) | RoleBinding::Detailed { backend: b, .. } => b,
        }
    }

    fn model(&self) -> Option<&str> {
        match self {
            RoleBinding::Backend(_) => None,
            RoleBinding::Detailed { model, .. } => model.as_deref(),
        }
    }
}

impl ProviderConfig {
    pub fn from_toml(text: &str) -> Result<Self, ProviderError> {
        toml::from_str(text).map_err(|e| ProviderError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Every standard role bound to one mock backend carrying the sample fixtures.
    pub fn builtin_mock() -> Self {
        let mut backends = BTreeMap::new();
        backends.insert("mock".to_string(), BackendConfig::Mock { fixtures: None, builtin: true });
        let mut roles = BTreeMap::new();
        let mut all = vec![Role::ConceptMapper, Role::QuestionWriter, Role::Evaluator, Role::FeatureExtractor];
        all.extend(Role::item_writers(4));
        for role in all {
            roles.insert(role.to_string(), RoleBinding::Backend("mock".into()));
        }
        ProviderConfig {
            retry: RetrySettings::default(),
            max_response_bytes: default_max_response_bytes(),
            backends,
            roles,
        }
    }

    /// Builds a hub. Mock backends get one instance per bound role so that
    /// builtin fixtures can differ by role (each item writer has its own).
    pub fn build(&self, base_dir: Option<&Path>) -> Result<ProviderHub, ProviderError> {
        let mut hub = ProviderHub::new()
            .with_retry(RetryPolicy {
                max_retries: self.retry.max_retries,
                base_delay: Duration::from_millis(self.retry.base_delay_ms),
            })
            .with_max_response_bytes(self.max_response_bytes);

        for (role_name, binding) in &self.roles {
            let role: Role = role_name.parse()?;
            let name = binding.backend();
            let config = self.backends.get(name).ok_or_else(|| {
                ProviderError::Config(format!("role `{role_name}` names unknown backend `{name}`"))
            })?;
            let backend: Arc<dyn Backend> = match config {
                BackendConfig::Live { base_url, model, api_key_env, timeout_ms, temperature } => {
                    Arc::new(LiveBackend::new(
                        name,
                        base_url,
                        binding.model().unwrap_or(model),
                        api_key_env.as_deref(),
                        Duration::from_millis(*timeout_ms),
                        *temperature,
                    )?)
                }
                BackendConfig::Mock { fixtures, builtin } => {
                    let mock = MockBackend::new(name);
                    if *builtin {
                        mock.load(samples::builtin_fixtures(&role))?;
                    }
                    if let Some(path) = fixtures {
                        let path = match base_dir {
                            Some(dir) if path.is_relative() => dir.join(path),
                            _ => path.clone(),
                        };
                        let json = std::fs::read_to_string(&path)
                            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
                        mock.load_json(&json)?;
                    }
                    Arc::new(mock)
                }
            };
            hub = hub.with_role(role, backend);
        }
        Ok(hub)
    }
}
