use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{compose_prompt, Backend, ProviderError, TransportError};

/// Chat-completions backend for any OpenAI-compatible endpoint. The API key
/// is read from the environment once at construction and never logged.
pub struct LiveBackend {
    name: String,
    url: String,
    model: String,
    api_key: Option<String>,
    temperature: Option<f64>,
    client: reqwest::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl LiveBackend {
    pub fn new(
        name: &str,
        base_url: &str,
        model: &str,
        api_key_env: Option<&str>,
        timeout: Duration,
        temperature: Option<f64>,
    ) -> Result<Self, ProviderError> {
        let api_key = match api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ProviderError::Config(format!("backend `{name}`: environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Config(format!("backend `{name}`: {e}")))?;
        Ok(LiveBackend {
            name: name.to_string(),
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            temperature,
            client,
        })
    }
}

#[async_trait]
impl Backend for LiveBackend {
    fn name(&self) -> &str {
        &self.name
    }

    async fn complete(&self, prompt: &str, context: Option<&str>) -> Result<String, TransportError> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": compose_prompt(prompt, context)}],
        });
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| TransportError::retryable(format!("request failed: {}", e.without_url())))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportError::retryable(format!("upstream status {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::fatal(format!("upstream status {status}")));
        }
        let parsed: ChatResponse = resp
            .json()
            .await
            .map_err(|e| TransportError::retryable(format!("malformed response: {}", e.without_url())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TransportError::retryable("response carried no content"))
    }
}
