use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::http::HttpBackend;
use super::mock::ScriptedBackend;
use super::{ChatError, LlmBackend};

pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

/// How to reach the completion model. The API key itself is never stored;
/// only the name of the environment variable holding it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmBackendConfig {
    pub kind: BackendKind,
    /// Base URL of an OpenAI-compatible API; `/chat/completions` is appended.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    /// Mock replies keyed by exact player message.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub script: BTreeMap<String, String>,
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.into()
}
fn default_temperature() -> f64 {
    1.0
}
fn default_max_tokens() -> u32 {
    512
}
fn default_timeout_secs() -> f64 {
    30.0
}

impl Default for LlmBackendConfig {
    fn default() -> Self {
        Self::mock(BTreeMap::new())
    }
}

impl LlmBackendConfig {
    pub fn mock(script: BTreeMap<String, String>) -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            model: None,
            api_key_env: default_key_env(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
            script,
        }
    }

    pub fn http(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            model: Some(model.into()),
            ..Self::mock(BTreeMap::new())
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<(), ChatError> {
        let bad = |m: &str| Err(ChatError::BackendConfig(m.to_string()));
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be >= 0");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return bad("timeout_secs must be positive");
        }
        if self.kind == BackendKind::Http {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return bad("http backend requires an endpoint");
            }
            if self.model.as_deref().is_none_or(str::is_empty) {
                return bad("http backend requires a model");
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn LlmBackend>, ChatError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Mock => Arc::new(ScriptedBackend::new(self.script.clone())),
            BackendKind::Http => Arc::new(HttpBackend::new(self)),
        })
    }
}
