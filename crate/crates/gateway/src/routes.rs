use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use npc_spatial::chat::{run_ablation, Transcript};
use npc_spatial::chat::{BackendKind, SessionState, SystemClock};
use npc_spatial::compose::{radial_line, Provenance};
use npc_spatial::direction::{
    classify_cardinal, classify_vertical, flip_to_player, quantize_sectors, CardinalDirection, SectorLabel,
    VerticalBand,
};
use npc_spatial::panorama::QuadrantTags;
use npc_spatial::radial::{group_plural, humanize_asset_name, GroupedHit, SkippedObject};
use npc_spatial::scene::{NpcPose, SceneObject};
use npc_spatial::{preset, AblationConfig, ChatMessage, ChatSession, Vec3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::store::{Lookup, SharedSession};
use crate::AppState;

type AppResult<T> = Result<T, ApiError>;
type Shared = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/scenes/{id}", get(get_scene))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(end_session))
        .route("/sessions/{id}/context", get(get_context))
        .route("/sessions/{id}/messages", post(send_message))
        .route("/ablations", post(ablate))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

/// Syntax errors are the client's framing problem (400); well-formed JSON of
/// the wrong shape is a validation problem (422).
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> AppResult<T> {
    serde_json::from_slice(body).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", e.to_string())
        }
        _ => ApiError::bad_request(e.to_string()),
    })
}

fn live_session(state: &AppState, id: &str) -> AppResult<SharedSession> {
    match state.store.get(id) {
        Lookup::Live(s) => Ok(s),
        Lookup::Ended => Err(ApiError::session_ended(id)),
        Lookup::Missing => Err(ApiError::session_not_found(id)),
    }
}

#[derive(Serialize)]
struct SceneSummary<'a> {
    id: &'a str,
    npc: &'a NpcPose,
    object_count: usize,
    has_tag_fixture: bool,
}

#[derive(Serialize)]
struct SceneDetail<'a> {
    id: &'a str,
    npc: &'a NpcPose,
    objects: &'a [SceneObject],
    has_tag_fixture: bool,
}

async fn list_scenes(State(state): Shared) -> impl IntoResponse {
    let scenes: Vec<SceneSummary> = state
        .scenes
        .values()
        .map(|s| SceneSummary {
            id: &s.id,
            npc: &s.npc,
            object_count: s.objects.len(),
            has_tag_fixture: s.tag_fixture.is_some(),
        })
        .collect();
    Json(serde_json::json!({ "scenes": scenes }))
}

async fn get_scene(State(state): Shared, Path(id): Path<String>) -> AppResult<impl IntoResponse> {
    let s = state.scenes.get(&id).ok_or_else(|| ApiError::scene_not_found(&id))?;
    Ok(Json(serde_json::to_value(SceneDetail {
        id: &s.id,
        npc: &s.npc,
        objects: &s.objects,
        has_tag_fixture: s.tag_fixture.is_some(),
    })
    .unwrap()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    scene_id: String,
    #[serde(default)]
    preset: Option<u8>,
    #[serde(default)]
    config: Option<AblationConfig>,
    #[serde(default)]
    backend: Option<BackendKind>,
}

#[derive(Serialize)]
struct SessionView<'a> {
    id: &'a str,
    scene_id: &'a str,
    state: SessionState,
    backend: &'a str,
    config: &'a AblationConfig,
    history: &'a [ChatMessage],
}

impl<'a> From<&'a ChatSession> for SessionView<'a> {
    fn from(s: &'a ChatSession) -> Self {
        Self {
            id: s.id(),
            scene_id: s.scene_id(),
            state: s.state(),
            backend: s.backend_kind(),
            config: s.config(),
            history: s.history(),
        }
    }
}

fn pick_backend(state: &AppState, kind: Option<BackendKind>) -> AppResult<Arc<dyn npc_spatial::LlmBackend>> {
    state
        .backends
        .pick(kind)
        .ok_or_else(|| ApiError::invalid_config("http backend is not configured on this server"))
}

async fn create_session(State(state): Shared, body: Bytes) -> AppResult<impl IntoResponse> {
    let req: CreateSession = parse_body(&body)?;
    let scene = state
        .scenes
        .get(&req.scene_id)
        .ok_or_else(|| ApiError::scene_not_found(&req.scene_id))?;
    let config = match (req.preset, req.config) {
        (Some(id), None) => preset(id).map_err(|e| ApiError::invalid_config(e.to_string()))?,
        (None, Some(config)) => config,
        (Some(_), Some(_)) => return Err(ApiError::invalid_config("give either preset or config, not both")),
        (None, None) => return Err(ApiError::invalid_config("one of preset or config is required")),
    };
    config
        .validate()
        .map_err(|e| ApiError::invalid_config(e.to_string()))?;
    let backend = pick_backend(&state, req.backend)?;
    let session = ChatSession::create(scene, config, backend, &state.pipeline).await?;
    let body = serde_json::to_value(SessionView::from(&session)).unwrap();
    let id = state.store.insert(session);
    tracing::info!(session = %id, scene = %req.scene_id, "session created");
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_session(State(state): Shared, Path(id): Path<String>) -> AppResult<impl IntoResponse> {
    let session = live_session(&state, &id)?;
    let guard = session.lock().await;
    Ok(Json(serde_json::to_value(SessionView::from(&*guard)).unwrap()))
}

async fn end_session(State(state): Shared, Path(id): Path<String>) -> AppResult<StatusCode> {
    if state.store.end(&id).await {
        tracing::info!(session = %id, "session ended");
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::session_not_found(&id))
    }
}

#[derive(Serialize)]
struct HitView {
    object_id: String,
    asset_name: String,
    display_name: String,
    /// Exactly the line this hit contributes to the context text.
    line: String,
    direction: Vec3,
    distance: f64,
    npc_side: Option<CardinalDirection>,
    player_side: Option<CardinalDirection>,
    vertical: VerticalBand,
    sector: Option<SectorLabel>,
}

#[derive(Serialize)]
struct RadialView {
    hits: Vec<HitView>,
    groups: Vec<GroupedHit>,
    skipped: Vec<SkippedObject>,
}

#[derive(Serialize)]
struct ContextView {
    session_id: String,
    config: AblationConfig,
    text: String,
    messages: Vec<npc_spatial::compose::ContextMessage>,
    provenance: Provenance,
    tags: Option<QuadrantTags>,
    radial: Option<RadialView>,
}

async fn get_context(State(state): Shared, Path(id): Path<String>) -> AppResult<impl IntoResponse> {
    let session = live_session(&state, &id)?;
    let s = session.lock().await;
    let config = *s.config();
    let radial = s.inputs().radial.as_ref().map(|sel| RadialView {
        hits: sel
            .hits
            .iter()
            .map(|h| {
                let npc_side = classify_cardinal(h.direction).ok();
                HitView {
                    object_id: h.object_id.clone(),
                    asset_name: h.asset_name.clone(),
                    display_name: humanize_asset_name(&h.asset_name),
                    line: radial_line(&config, h),
                    direction: h.direction,
                    distance: h.distance,
                    npc_side,
                    player_side: npc_side.map(flip_to_player),
                    vertical: classify_vertical(h.direction),
                    sector: config
                        .quantize_directions
                        .and_then(|n| quantize_sectors(h.direction, n).ok()),
                }
            })
            .collect(),
        groups: group_plural(&sel.hits),
        skipped: sel.skipped.clone(),
    });
    let view = ContextView {
        session_id: s.id().to_string(),
        config,
        text: s.context().text(),
        messages: s.context().messages.clone(),
        provenance: s.context().provenance.clone(),
        tags: s.inputs().tags.clone(),
        radial,
    };
    Ok(Json(serde_json::to_value(view).unwrap()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SendMessage {
    text: String,
}

async fn send_message(
    State(state): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> AppResult<impl IntoResponse> {
    let session = live_session(&state, &id)?;
    let req: SendMessage = parse_body(&body)?;
    let mut s = session.lock().await;
    let reply = s.send_player_message(&req.text).await.map_err(|e| {
        tracing::warn!(session = %id, error = %e, "message failed");
        ApiError::from(e)
    })?;
    Ok(Json(serde_json::json!({
        "reply": reply,
        "history_len": s.history().len(),
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AblateRequest {
    scene_id: String,
    queries: Vec<String>,
    #[serde(default)]
    backend: Option<BackendKind>,
}

async fn ablate(State(state): Shared, body: Bytes) -> AppResult<impl IntoResponse> {
    let req: AblateRequest = parse_body(&body)?;
    let scene = state
        .scenes
        .get(&req.scene_id)
        .ok_or_else(|| ApiError::scene_not_found(&req.scene_id))?;
    let backend = pick_backend(&state, req.backend)?;
    let run = run_ablation(scene, &req.queries, backend, &state.pipeline, Arc::new(SystemClock)).await?;
    if let Some((preset, err)) = run.failure {
        let mut api = ApiError::from(err);
        api.message = format!("preset {preset}: {}", api.message);
        return Err(api);
    }
    let transcripts: Vec<&Transcript> = run.transcripts.iter().collect();
    Ok(Json(serde_json::json!({ "transcripts": transcripts })))
}
