use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use chrono::{TimeZone, Utc};
use npc_spatial::chat::mock::{FailingBackend, RecordingBackend, ScriptedBackend};
use npc_spatial::chat::{
    llm_complete, run_ablation, write_transcripts, ChatError, ChatMessage, ChatSession, ContextPipeline,
    FixedClock, LlmBackendConfig, LlmError, Role, Transcript,
};
use npc_spatial::compose::{preset, RADIAL_HEADER, TAGS_HEADER};
use npc_spatial::panorama::{
    build_capture_spec, parse_quadrant_tags, serialize_quadrant_tags, FixtureSegmentation, HttpSegmentation,
    QuadrantTags, SegmentationBackend, SegmentationError,
};
use npc_spatial::radial::{select_radial, serialize_radial};
use npc_spatial::{load_scene_file, Scene};
use proptest::prelude::*;
use serde_json::{json, Value};

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn indoor() -> Scene {
    load_scene_file(fixture("scenes/indoor.json")).unwrap()
}

fn queries(file: &str) -> Vec<String> {
    std::fs::read_to_string(fixture(file))
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

fn clock() -> Arc<FixedClock> {
    Arc::new(FixedClock(Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap()))
}

const TAG_EXAMPLE: &str = r#"{"left":["cabinet","pottery","closet"],"in-front":["barrel","basement"],"right":["altar","basement","candle"],"behind":["altar","candle"]}"#;

async fn serve(router: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    format!("http://{addr}")
}

#[test]
fn indoor_fixture_loads() {
    let scene = indoor();
    assert_eq!(scene.objects.len(), 12);
    assert_eq!(scene.excluded_ids().count(), 2);
    let spec = build_capture_spec(&scene);
    assert_eq!(spec.exclusions, ["npc-hand-l", "npc-hand-r"]);
    assert!((spec.eye_position.z - 1.7).abs() < 1e-12);
}

#[test]
fn indoor_radial_block_contains_reference_lines() {
    let scene = indoor();
    let sel = select_radial(&scene, 10.0).unwrap();
    assert_eq!(sel.hits.len(), 9);
    let text = serialize_radial(&sel.hits);
    for line in [
        "Simple_Shelf2, VEC:X=-0.940 Y=-0.340 Z=0.000",
        "Simple_Pot_Stubby2, VEC:X=-0.456 Y=0.874 Z=-0.171",
        "Barrel1, VEC:X=0.348 Y=0.937 Z=0.000",
    ] {
        assert!(text.lines().any(|l| l == line), "missing {line}");
    }
    assert_eq!(text, serialize_radial(&select_radial(&scene, 10.0).unwrap().hits));
}

#[tokio::test]
async fn fixture_segmentation_is_deterministic() {
    let scene = indoor();
    let spec = build_capture_spec(&scene);
    let a = FixtureSegmentation.tag(&spec, &scene).await.unwrap();
    let b = FixtureSegmentation.tag(&spec, &scene).await.unwrap();
    assert_eq!(a, b);
    assert_eq!(serialize_quadrant_tags(&a), TAG_EXAMPLE);

    let mut no_fixture = scene.clone();
    no_fixture.tag_fixture = None;
    assert!(matches!(
        FixtureSegmentation.tag(&spec, &no_fixture).await,
        Err(SegmentationError::MissingFixture(_))
    ));
    no_fixture.tag_fixture = Some(fixture("tags/missing.json"));
    assert!(matches!(
        FixtureSegmentation.tag(&spec, &no_fixture).await,
        Err(SegmentationError::FixtureIo { .. })
    ));
}

#[tokio::test]
async fn http_segmentation_contract() {
    let seen = Arc::new(std::sync::Mutex::new(Vec::<Value>::new()));
    let router = Router::new()
        .route(
            "/ok/tag",
            post(|State(seen): State<Arc<std::sync::Mutex<Vec<Value>>>>, Json(body): Json<Value>| async move {
                seen.lock().unwrap().push(body);
                TAG_EXAMPLE
            }),
        )
        .route("/broken/tag", post(|| async { StatusCode::INTERNAL_SERVER_ERROR }))
        .route("/garbage/tag", post(|| async { r#"{"left":[]}"# }))
        .route(
            "/slow/tag",
            post(|| async {
                tokio::time::sleep(Duration::from_secs(2)).await;
                TAG_EXAMPLE
            }),
        )
        .with_state(seen.clone());
    let base = serve(router).await;
    let scene = indoor();
    let spec = build_capture_spec(&scene);

    let tags = HttpSegmentation::new(format!("{base}/ok"), Duration::from_secs(5))
        .tag(&spec, &scene)
        .await
        .unwrap();
    assert_eq!(tags, parse_quadrant_tags(TAG_EXAMPLE.as_bytes()).unwrap());
    assert_eq!(
        seen.lock().unwrap()[0],
        json!({"scene_id": "indoor-shrine", "views": ["front", "left", "right", "behind"]})
    );

    let err = HttpSegmentation::new(format!("{base}/broken"), Duration::from_secs(5))
        .tag(&spec, &scene)
        .await
        .unwrap_err();
    assert!(matches!(err, SegmentationError::Status { status: 500 }));

    let err = HttpSegmentation::new(format!("{base}/garbage"), Duration::from_secs(5))
        .tag(&spec, &scene)
        .await
        .unwrap_err();
    assert!(matches!(err, SegmentationError::Malformed(_)));

    let err = HttpSegmentation::new(format!("{base}/slow"), Duration::from_millis(200))
        .tag(&spec, &scene)
        .await
        .unwrap_err();
    assert!(matches!(err, SegmentationError::Timeout(_)));

    // a failing tagger stops session creation
    let pipeline = ContextPipeline {
        segmentation: Arc::new(HttpSegmentation::new(format!("{base}/broken"), Duration::from_secs(5))),
        ..ContextPipeline::default()
    };
    let err = ChatSession::create(&scene, preset(1).unwrap(), Arc::new(ScriptedBackend::echo()), &pipeline)
        .await
        .unwrap_err();
    assert!(matches!(err, ChatError::Segmentation(SegmentationError::Status { status: 500 })));
}

#[derive(Clone, Default)]
struct StubState {
    attempts: Arc<AtomicUsize>,
    bodies: Arc<std::sync::Mutex<Vec<Value>>>,
    auth: Arc<std::sync::Mutex<Vec<Option<String>>>>,
}

fn last_user(body: &Value) -> String {
    body["messages"]
        .as_array()
        .unwrap()
        .iter()
        .rev()
        .find(|m| m["role"] == "user")
        .map(|m| m["content"].as_str().unwrap().to_string())
        .unwrap_or_default()
}

async fn completion_stub() -> (String, StubState) {
    let state = StubState::default();
    let router = Router::new()
        .route(
            "/echo/chat/completions",
            post(|State(s): State<StubState>, headers: HeaderMap, Json(body): Json<Value>| async move {
                s.attempts.fetch_add(1, Ordering::SeqCst);
                s.auth.lock().unwrap().push(
                    headers
                        .get("authorization")
                        .map(|h| h.to_str().unwrap().to_string()),
                );
                let reply = last_user(&body);
                s.bodies.lock().unwrap().push(body);
                Json(json!({"choices": [{"message": {"role": "assistant", "content": reply}}]}))
            }),
        )
        .route(
            "/malformed/chat/completions",
            post(|| async { Json(json!({"id": "x", "object": "chat.completion"})) }),
        )
        .route(
            "/limited/chat/completions",
            post(|| async { (StatusCode::TOO_MANY_REQUESTS, "slow down") }),
        )
        .route(
            "/broken/chat/completions",
            post(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "boom") }),
        )
        .route(
            "/slow/chat/completions",
            post(|State(s): State<StubState>| async move {
                s.attempts.fetch_add(1, Ordering::SeqCst);
                tokio::time::sleep(Duration::from_secs(3)).await;
                Json(json!({"choices": [{"message": {"content": "late"}}]}))
            }),
        )
        .with_state(state.clone());
    (serve(router).await, state)
}

fn http_config(base: &str, route: &str) -> LlmBackendConfig {
    let mut cfg = LlmBackendConfig::http(format!("{base}/{route}"), "stub-model");
    cfg.timeout_secs = 0.3;
    cfg.temperature = 0.7;
    cfg.max_tokens = 64;
    cfg.api_key_env = "NPC_SPATIAL_TEST_KEY".into();
    cfg
}

#[tokio::test]
async fn http_backend_against_stub_server() {
    std::env::set_var("NPC_SPATIAL_TEST_KEY", "sk-test");
    let (base, state) = completion_stub().await;
    let now = Utc::now();
    let messages = vec![
        ChatMessage::new(Role::System, "context", now),
        ChatMessage::new(Role::User, "Where is the altar?", now),
    ];

    let echo = http_config(&base, "echo").build().unwrap();
    assert_eq!(llm_complete(echo.as_ref(), &messages).await.unwrap(), "Where is the altar?");
    let body = state.bodies.lock().unwrap()[0].clone();
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["max_tokens"], 64);
    assert_eq!(
        body["messages"],
        json!([{"role": "system", "content": "context"}, {"role": "user", "content": "Where is the altar?"}])
    );
    assert_eq!(state.auth.lock().unwrap()[0].as_deref(), Some("Bearer sk-test"));
    assert_eq!(llm_complete(echo.as_ref(), &[]).await, Err(LlmError::EmptyConversation));

    let malformed = http_config(&base, "malformed").build().unwrap();
    assert!(matches!(
        llm_complete(malformed.as_ref(), &messages).await,
        Err(LlmError::MalformedResponse(_))
    ));
    let limited = http_config(&base, "limited").build().unwrap();
    assert_eq!(llm_complete(limited.as_ref(), &messages).await, Err(LlmError::RateLimited));
    let broken = http_config(&base, "broken").build().unwrap();
    assert_eq!(
        llm_complete(broken.as_ref(), &messages).await,
        Err(LlmError::Status { status: 500 })
    );

    state.attempts.store(0, Ordering::SeqCst);
    let slow = http_config(&base, "slow").build().unwrap();
    assert!(matches!(llm_complete(slow.as_ref(), &messages).await, Err(LlmError::Timeout(_))));
    // one attempt plus one retry
    assert_eq!(state.attempts.load(Ordering::SeqCst), 2);

    let refused = LlmBackendConfig::http("http://127.0.0.1:9", "m").build().unwrap();
    assert!(matches!(llm_complete(refused.as_ref(), &messages).await, Err(LlmError::Transport(_))));
}

#[tokio::test]
async fn backend_receives_exact_history() {
    let scene = indoor();
    let recorder = Arc::new(RecordingBackend::new(ScriptedBackend::echo()));
    let mut session = ChatSession::create(&scene, preset(1).unwrap(), recorder.clone(), &ContextPipeline::default())
        .await
        .unwrap();
    let head = session.history()[0].content.clone();
    assert!(head.contains(TAGS_HEADER) && head.contains(RADIAL_HEADER));

    for (n, q) in ["first", "second", "third"].iter().enumerate() {
        let before = session.history().to_vec();
        session.send_player_message(q).await.unwrap();
        assert_eq!(session.history().len(), 1 + 2 * (n + 1));
        let sent = recorder.calls().last().unwrap().clone();
        assert_eq!(&sent[..before.len()], before.as_slice());
        assert_eq!(sent.len(), before.len() + 1);
        assert_eq!(sent.last().unwrap().content, *q);
        assert_eq!(sent.last().unwrap().role, Role::User);
    }
    assert_eq!(session.history()[2].content, "echo: first");
}

#[tokio::test]
async fn scripted_reply_for_expert_query() {
    let script = ScriptedBackend::parse_script(&std::fs::read_to_string(fixture("scripts/indoor.txt")).unwrap()).unwrap();
    let q1 = queries("queries/expert_q123.txt").remove(0);
    let mut session = ChatSession::create(
        &indoor(),
        preset(3).unwrap(),
        LlmBackendConfig::mock(script.clone()).build().unwrap(),
        &ContextPipeline::default(),
    )
    .await
    .unwrap();
    let reply = session.send_player_message(&q1).await.unwrap();
    assert_eq!(reply.content, script[&q1]);
}

#[tokio::test]
async fn ablation_over_all_presets() {
    let scene = indoor();
    let recorder = Arc::new(RecordingBackend::new(ScriptedBackend::echo()));
    let qs = queries("queries/expert_q123.txt");
    let run = run_ablation(&scene, &qs, recorder.clone(), &ContextPipeline::default(), clock())
        .await
        .unwrap();
    assert!(run.is_complete());
    assert_eq!(run.transcripts.len(), 4);
    for (t, id) in run.transcripts.iter().zip(1u8..) {
        assert_eq!(t.header.preset, id);
        assert_eq!(t.exchanges(), 3);
        assert_eq!(t.messages.len(), 7);
    }
    let p2 = &run.transcripts[1];
    assert!(!p2.header.provenance.support_prompt.included);
    assert!(p2.header.provenance.segmentation.included);
    assert!(!p2.messages[0].content.contains("quest giver"));

    // every backend call opened with the matching preset's context
    let calls = recorder.calls();
    assert_eq!(calls.len(), 12);
    for (i, call) in calls.iter().enumerate() {
        assert_eq!(call[0].content, run.transcripts[i / 3].messages[0].content);
    }

    let dir = tempfile::tempdir().unwrap();
    let paths = write_transcripts(dir.path(), &run.transcripts).unwrap();
    assert_eq!(paths.len(), 4);
    let back = Transcript::from_jsonl(&std::fs::read_to_string(&paths[0]).unwrap()).unwrap();
    assert_eq!(back, run.transcripts[0]);
}

#[tokio::test]
async fn ablation_golden_transcript() {
    let run = run_ablation(
        &indoor(),
        &queries("queries/expert_q123.txt"),
        Arc::new(ScriptedBackend::echo()),
        &ContextPipeline::default(),
        clock(),
    )
    .await
    .unwrap();
    let golden_path = fixture("golden/preset-1.jsonl");
    let got = run.transcripts[0].to_jsonl();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_path.parent().unwrap()).unwrap();
        std::fs::write(&golden_path, &got).unwrap();
    }
    let expected = std::fs::read_to_string(&golden_path).unwrap();
    assert_eq!(got, expected);
}

#[tokio::test]
async fn ablation_errors_and_partial_results() {
    let scene = indoor();
    let err = run_ablation(&scene, &[], Arc::new(ScriptedBackend::echo()), &ContextPipeline::default(), clock())
        .await
        .unwrap_err();
    assert!(matches!(err, ChatError::NoQueries));

    let qs = queries("queries/expert_q123.txt");
    let flaky = Arc::new(FailingBackend::after(4, LlmError::Timeout(Duration::from_secs(1))));
    let run = run_ablation(&scene, &qs, flaky, &ContextPipeline::default(), clock())
        .await
        .unwrap();
    assert_eq!(run.transcripts.len(), 1);
    assert!(matches!(run.failure, Some((2, ChatError::Backend(LlmError::Timeout(_))))));
}

#[test]
fn mock_config_builds_scripted_backend() {
    let mut script = BTreeMap::new();
    script.insert("Q1".into(), "A1".into());
    let backend = LlmBackendConfig::mock(script).build().unwrap();
    assert_eq!(backend.kind(), "mock");
}

fn tag_list() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-z][a-z ]{0,10}[a-z]", 0..6)
}

proptest! {
    #[test]
    fn quadrant_tags_round_trip(l in tag_list(), f in tag_list(), r in tag_list(), b in tag_list()) {
        let tags = QuadrantTags::new(&l, &f, &r, &b);
        let text = serialize_quadrant_tags(&tags);
        prop_assert_eq!(parse_quadrant_tags(text.as_bytes()).unwrap(), tags.clone());
        prop_assert_eq!(serialize_quadrant_tags(&parse_quadrant_tags(text.as_bytes()).unwrap()), text);
    }

    #[test]
    fn missing_quadrant_is_named(drop in 0usize..4) {
        let keys = ["left", "in-front", "right", "behind"];
        let mut obj = serde_json::Map::new();
        for (i, k) in keys.iter().enumerate() {
            if i != drop {
                obj.insert(k.to_string(), json!(["x"]));
            }
        }
        let err = parse_quadrant_tags(Value::Object(obj).to_string().as_bytes()).unwrap_err();
        prop_assert!(err.to_string().contains(keys[drop]));
    }
}
