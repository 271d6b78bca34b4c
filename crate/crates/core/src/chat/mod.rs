//! Player/NPC conversation: sessions, history, and completion backends.

mod ablation;
mod backend;
mod http;
pub mod mock;
mod session;

use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::compose::Role;
pub use ablation::{run_ablation, write_transcripts, AblationRun, Transcript, TranscriptHeader};
pub use backend::{BackendKind, LlmBackendConfig, DEFAULT_API_KEY_ENV};
pub use http::HttpBackend;
pub use session::{ChatSession, ContextInputs, ContextPipeline, SessionState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    pub timestamp: DateTime<Utc>,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        Self {
            role,
            content: content.into(),
            timestamp,
        }
    }
}

/// Failures of a single completion call. Each kind maps to a distinct
/// gateway status.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LlmError {
    #[error("completion backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("completion backend unreachable: {0}")]
    Transport(String),
    #[error("completion backend rate limited the request")]
    RateLimited,
    #[error("completion backend returned status {status}")]
    Status { status: u16 },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("no messages to complete")]
    EmptyConversation,
}

#[async_trait]
pub trait LlmBackend: Send + Sync {
    /// Produce the assistant's next message for a conversation.
    async fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;

    /// Short name for transcripts and logs.
    fn kind(&self) -> &'static str;
}

pub async fn llm_complete(backend: &dyn LlmBackend, messages: &[ChatMessage]) -> Result<String, LlmError> {
    if messages.is_empty() {
        return Err(LlmError::EmptyConversation);
    }
    backend.complete(messages).await
}

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("session ended")]
    SessionEnded,
    #[error("player message is empty")]
    EmptyMessage,
    #[error("no queries given")]
    NoQueries,
    #[error(transparent)]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Segmentation(#[from] crate::panorama::SegmentationError),
    #[error(transparent)]
    Compose(#[from] crate::compose::ComposeError),
    #[error(transparent)]
    Radius(#[from] crate::radial::InvalidRadius),
    #[error("invalid backend config: {0}")]
    BackendConfig(String),
    #[error("transcript export failed: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always reports the same instant. Used for golden transcripts.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}
