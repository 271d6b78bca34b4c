//! In-process completion backends for tests and offline runs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;

use super::{ChatMessage, LlmBackend, LlmError, Role};

/// Answers from a fixed table keyed by the latest player message, echoing
/// anything it does not know.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    script: BTreeMap<String, String>,
}

impl ScriptedBackend {
    pub fn new(script: BTreeMap<String, String>) -> Self {
        Self { script }
    }

    pub fn echo() -> Self {
        Self::default()
    }

    /// Parse a script file: blocks of `Q: ...` followed by `A: ...`, with
    /// blank lines between entries. Answers may span several lines.
    pub fn parse_script(text: &str) -> Result<BTreeMap<String, String>, String> {
        let mut script = BTreeMap::new();
        let mut question: Option<String> = None;
        let mut answer: Option<String> = None;
        let mut flush = |q: &mut Option<String>, a: &mut Option<String>| -> Result<(), String> {
            match (q.take(), a.take()) {
                (Some(q), Some(a)) => {
                    script.insert(q, a.trim_end().to_string());
                    Ok(())
                }
                (Some(q), None) => Err(format!("question without answer: {q:?}")),
                (None, Some(_)) => Err("answer without question".into()),
                (None, None) => Ok(()),
            }
        };
        for line in text.lines() {
            if let Some(q) = line.strip_prefix("Q:") {
                flush(&mut question, &mut answer)?;
                question = Some(q.trim().to_string());
            } else if let Some(a) = line.strip_prefix("A:") {
                if answer.is_some() || question.is_none() {
                    return Err("answer without question".into());
                }
                answer = Some(a.trim().to_string());
            } else if let Some(a) = answer.as_mut() {
                a.push('\n');
                a.push_str(line);
            } else if !line.trim().is_empty() && !line.starts_with('#') {
                return Err(format!("unexpected line {line:?}"));
            }
        }
        flush(&mut question, &mut answer)?;
        Ok(script)
    }

    pub fn reply_to(&self, player_text: &str) -> String {
        match self.script.get(player_text.trim()) {
            Some(reply) => reply.clone(),
            None => format!("echo: {player_text}"),
        }
    }
}

#[async_trait]
impl LlmBackend for ScriptedBackend {
    async fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        Ok(self.reply_to(last_user))
    }

    fn kind(&self) -> &'static str {
        "mock"
    }
}

/// Wraps another backend and keeps every message list it was asked to complete.
pub struct RecordingBackend<B> {
    inner: B,
    calls: Mutex<Vec<Vec<ChatMessage>>>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> Vec<Vec<ChatMessage>> {
        self.calls.lock().unwrap().clone()
    }
}

#[async_trait]
impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    async fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        self.calls.lock().unwrap().push(messages.to_vec());
        self.inner.complete(messages).await
    }

    fn kind(&self) -> &'static str {
        self.inner.kind()
    }
}

/// Fails with a fixed error after `succeed_first` successful echo replies.
pub struct FailingBackend {
    error: LlmError,
    succeed_first: usize,
    calls: AtomicUsize,
}

impl FailingBackend {
    pub fn new(error: LlmError) -> Self {
        Self::after(0, error)
    }

    pub fn after(succeed_first: usize, error: LlmError) -> Self {
        Self {
            error,
            succeed_first,
            calls: AtomicUsize::new(0),
        }
    }
}

#[async_trait]
impl LlmBackend for FailingBackend {
    async fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) < self.succeed_first {
            return ScriptedBackend::echo().complete(messages).await;
        }
        Err(self.error.clone())
    }

    fn kind(&self) -> &'static str {
        "failing"
    }
}
