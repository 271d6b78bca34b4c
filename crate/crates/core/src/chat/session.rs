use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;

use super::{llm_complete, ChatError, ChatMessage, Clock, LlmBackend, Role, SystemClock};
use crate::compose::{compose_context, AblationConfig, ContextBundle, DEFAULT_SUPPORT_PROMPT};
use crate::panorama::{build_capture_spec, FixtureSegmentation, QuadrantTags, SegmentationBackend};
use crate::radial::{select_radial, RadialSelection, DEFAULT_RADIUS_M};
use crate::scene::Scene;

/// Everything needed to turn a scene into context: the support prompt text,
/// the query radius and the tagging service.
#[derive(Clone)]
pub struct ContextPipeline {
    pub support_prompt: String,
    pub radius_m: f64,
    pub segmentation: Arc<dyn SegmentationBackend>,
}

impl Default for ContextPipeline {
    fn default() -> Self {
        Self {
            support_prompt: DEFAULT_SUPPORT_PROMPT.to_string(),
            radius_m: DEFAULT_RADIUS_M,
            segmentation: Arc::new(FixtureSegmentation),
        }
    }
}

/// The raw inputs a context was composed from. Only blocks enabled by the
/// config are computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ContextInputs {
    pub tags: Option<QuadrantTags>,
    pub radial: Option<RadialSelection>,
}

impl ContextPipeline {
    pub async fn gather(&self, scene: &Scene, config: &AblationConfig) -> Result<ContextInputs, ChatError> {
        config.validate()?;
        let tags = if config.use_segmentation {
            let spec = build_capture_spec(scene);
            Some(self.segmentation.tag(&spec, scene).await?)
        } else {
            None
        };
        let radial = if config.use_radial {
            Some(select_radial(scene, self.radius_m)?)
        } else {
            None
        };
        Ok(ContextInputs { tags, radial })
    }

    pub async fn build(
        &self,
        scene: &Scene,
        config: &AblationConfig,
    ) -> Result<(ContextBundle, ContextInputs), ChatError> {
        let inputs = self.gather(scene, config).await?;
        let bundle = compose_context(
            config,
            &self.support_prompt,
            inputs.tags.as_ref(),
            inputs.radial.as_ref().map(|r| r.hits.as_slice()),
        )?;
        Ok((bundle, inputs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Active,
    Ended,
}

static SESSION_COUNTER: AtomicU64 = AtomicU64::new(1);

fn next_session_id() -> String {
    let n = SESSION_COUNTER.fetch_add(1, Ordering::Relaxed);
    let t = chrono::Utc::now().timestamp_micros();
    format!("s{t:x}-{n}")
}

/// One conversation with the NPC.
///
/// History starts with the context messages and only grows while the session
/// is active. Ending a session drops the history, the context and the inputs.
pub struct ChatSession {
    id: String,
    scene_id: String,
    config: AblationConfig,
    context: ContextBundle,
    inputs: ContextInputs,
    history: Vec<ChatMessage>,
    state: SessionState,
    backend: Arc<dyn LlmBackend>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for ChatSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatSession")
            .field("id", &self.id)
            .field("scene_id", &self.scene_id)
            .field("state", &self.state)
            .field("history_len", &self.history.len())
            .field("backend", &self.backend.kind())
            .finish()
    }
}

impl ChatSession {
    pub async fn create(
        scene: &Scene,
        config: AblationConfig,
        backend: Arc<dyn LlmBackend>,
        pipeline: &ContextPipeline,
    ) -> Result<Self, ChatError> {
        Self::create_with_clock(scene, config, backend, pipeline, Arc::new(SystemClock)).await
    }

    pub async fn create_with_clock(
        scene: &Scene,
        config: AblationConfig,
        backend: Arc<dyn LlmBackend>,
        pipeline: &ContextPipeline,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, ChatError> {
        let (context, inputs) = pipeline.build(scene, &config).await?;
        let now = clock.now();
        let history = context
            .messages
            .iter()
            .map(|m| ChatMessage::new(m.role, m.text.clone(), now))
            .collect();
        Ok(Self {
            id: next_session_id(),
            scene_id: scene.id.clone(),
            config,
            context,
            inputs,
            history,
            state: SessionState::Active,
            backend,
            clock,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn config(&self) -> &AblationConfig {
        &self.config
    }

    pub fn context(&self) -> &ContextBundle {
        &self.context
    }

    pub fn inputs(&self) -> &ContextInputs {
        &self.inputs
    }

    pub fn history(&self) -> &[ChatMessage] {
        &self.history
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn backend_kind(&self) -> &'static str {
        self.backend.kind()
    }

    /// Send a player line and append the exchange. On any failure the history
    /// is left exactly as it was.
    pub async fn send_player_message(&mut self, text: &str) -> Result<ChatMessage, ChatError> {
        if self.state == SessionState::Ended {
            return Err(ChatError::SessionEnded);
        }
        if text.trim().is_empty() {
            return Err(ChatError::EmptyMessage);
        }
        let mut outgoing = self.history.clone();
        outgoing.push(ChatMessage::new(Role::User, text, self.clock.now()));
        let reply = llm_complete(self.backend.as_ref(), &outgoing).await?;
        let reply = ChatMessage::new(Role::Assistant, reply, self.clock.now());
        self.history = outgoing;
        self.history.push(reply.clone());
        Ok(reply)
    }

    /// Clear everything the session remembered. Ending twice is a no-op.
    pub fn end(&mut self) {
        if self.state == SessionState::Ended {
            return;
        }
        self.state = SessionState::Ended;
        self.history = Vec::new();
        self.inputs = ContextInputs::default();
        self.context.messages = Vec::new();
    }
}
