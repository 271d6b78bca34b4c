//! Run the same player queries against every context preset.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ChatError, ChatMessage, ChatSession, Clock, ContextPipeline, LlmBackend, Role};
use crate::compose::{preset, AblationConfig, Provenance};
use crate::scene::Scene;

pub const PRESET_IDS: [u8; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub preset: u8,
    pub scene_id: String,
    pub backend: String,
    pub config: AblationConfig,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub messages: Vec<ChatMessage>,
}

impl Transcript {
    pub fn exchanges(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::Assistant).count()
    }

    pub fn file_name(&self) -> String {
        format!("preset-{}.jsonl", self.header.preset)
    }

    /// JSON lines: a header object, then one object per message.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "type", rename_all = "lowercase")]
        enum Line<'a> {
            Header(&'a TranscriptHeader),
            Message(&'a ChatMessage),
        }
        let mut out = serde_json::to_string(&Line::Header(&self.header)).unwrap();
        out.push('\n');
        for m in &self.messages {
            out.push_str(&serde_json::to_string(&Line::Message(m)).unwrap());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        #[serde(tag = "type", rename_all = "lowercase")]
        enum Line {
            Header(TranscriptHeader),
            Message(ChatMessage),
        }
        let mut header = None;
        let mut messages = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str(line)? {
                Line::Header(h) => header = Some(h),
                Line::Message(m) => messages.push(m),
            }
        }
        let header = header.ok_or_else(|| serde::de::Error::missing_field("header"))?;
        Ok(Self { header, messages })
    }
}

/// Transcripts for the presets that finished, plus the failure that stopped
/// the run, if any.
#[derive(Debug)]
pub struct AblationRun {
    pub transcripts: Vec<Transcript>,
    pub failure: Option<(u8, ChatError)>,
}

impl AblationRun {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// For each preset: open a fresh session, ask every query in order, keep the
/// transcript and end the session. Stops at the first failing preset.
pub async fn run_ablation(
    scene: &Scene,
    queries: &[String],
    backend: Arc<dyn LlmBackend>,
    pipeline: &ContextPipeline,
    clock: Arc<dyn Clock>,
) -> Result<AblationRun, ChatError> {
    if queries.is_empty() {
        return Err(ChatError::NoQueries);
    }
    let mut run = AblationRun {
        transcripts: Vec::new(),
        failure: None,
    };
    for id in PRESET_IDS {
        match run_preset(scene, id, queries, backend.clone(), pipeline, clock.clone()).await {
            Ok(t) => run.transcripts.push(t),
            Err(e) => {
                tracing::error!(preset = id, error = %e, "ablation preset failed");
                run.failure = Some((id, e));
                break;
            }
        }
    }
    Ok(run)
}

async fn run_preset(
    scene: &Scene,
    id: u8,
    queries: &[String],
    backend: Arc<dyn LlmBackend>,
    pipeline: &ContextPipeline,
    clock: Arc<dyn Clock>,
) -> Result<Transcript, ChatError> {
    let config = preset(id)?;
    let mut session = ChatSession::create_with_clock(scene, config, backend, pipeline, clock).await?;
    let result = async {
        for q in queries {
            session.send_player_message(q).await?;
        }
        Ok::<_, ChatError>(())
    }
    .await;
    let transcript = Transcript {
        header: TranscriptHeader {
            preset: id,
            scene_id: scene.id.clone(),
            backend: session.backend_kind().to_string(),
            config,
            provenance: session.context().provenance.clone(),
        },
        messages: session.history().to_vec(),
    };
    session.end();
    result.map(|_| transcript)
}

/// Write one `preset-N.jsonl` file per transcript into `dir`.
pub fn write_transcripts(dir: &Path, transcripts: &[Transcript]) -> Result<Vec<PathBuf>, ChatError> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(transcripts.len());
    for t in transcripts {
        let path = dir.join(t.file_name());
        let mut f = std::fs::File::create(&path)?;
        f.write_all(t.to_jsonl().as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}
