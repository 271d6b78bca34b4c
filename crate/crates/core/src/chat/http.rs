//! OpenAI-compatible chat-completion client.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{ChatMessage, LlmBackend, LlmBackendConfig, LlmError};

#[derive(Debug, Clone)]
pub struct HttpBackend {
    url: String,
    model: String,
    api_key_env: String,
    temperature: f64,
    max_tokens: u32,
    timeout: Duration,
    client: reqwest::Client,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

impl HttpBackend {
    /// `config` must already be validated.
    pub fn new(config: &LlmBackendConfig) -> Self {
        let base = config.endpoint.as_deref().unwrap_or_default().trim_end_matches('/');
        Self {
            url: format!("{base}/chat/completions"),
            model: config.model.clone().unwrap_or_default(),
            api_key_env: config.api_key_env.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            timeout: config.timeout(),
            client: reqwest::Client::new(),
        }
    }

    async fn attempt(&self, body: &CompletionRequest<'_>) -> Result<String, LlmError> {
        let mut req = self.client.post(&self.url).timeout(self.timeout).json(body);
        if let Ok(key) = std::env::var(&self.api_key_env) {
            req = req.bearer_auth(key);
        }
        let transport = |e: reqwest::Error| {
            if e.is_timeout() {
                LlmError::Timeout(self.timeout)
            } else {
                LlmError::Transport(e.to_string())
            }
        };
        let resp = req.send().await.map_err(transport)?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(LlmError::RateLimited);
        }
        if !status.is_success() {
            return Err(LlmError::Status {
                status: status.as_u16(),
            });
        }
        let bytes = resp.bytes().await.map_err(transport)?;
        let parsed: CompletionResponse = serde_json::from_slice(&bytes)
            .map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| LlmError::MalformedResponse("no assistant content in choices".into()))
    }
}

#[async_trait]
impl LlmBackend for HttpBackend {
    async fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let body = CompletionRequest {
            model: &self.model,
            messages: messages
                .iter()
                .map(|m| WireMessage {
                    role: m.role.as_str(),
                    content: &m.content,
                })
                .collect(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        match self.attempt(&body).await {
            Err(LlmError::Timeout(_)) => {
                tracing::warn!(url = %self.url, "completion timed out, retrying once");
                self.attempt(&body).await
            }
            other => other,
        }
    }

    fn kind(&self) -> &'static str {
        "http"
    }
}
