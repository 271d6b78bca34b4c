//! HTTP gateway for NPC chat sessions.
//!
//! Scenes are read once from a directory at startup; sessions live in memory
//! until they are ended. Every error response has the shape
//! `{"error": {"code": "...", "message": "..."}}`.

pub mod config;
pub mod error;
mod routes;
pub mod store;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use npc_spatial::chat::BackendKind;
use npc_spatial::panorama::HttpSegmentation;
use npc_spatial::scene::SceneError;
use npc_spatial::{load_scene_file, ChatError, ContextPipeline, LlmBackend, LlmBackendConfig, Scene};
use thiserror::Error;

pub use config::{ConfigError, SegmentationSource, ServerConfig};
pub use error::ApiError;
pub use routes::router;
pub use store::SessionStore;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot read scene directory {path}: {source}")]
    ScenesDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scene file {path}: {source}")]
    Scene {
        path: PathBuf,
        #[source]
        source: SceneError,
    },
    #[error("duplicate scene id {0:?}")]
    DuplicateScene(String),
    #[error("cannot read support prompt {path}: {source}")]
    Prompt {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Backend(#[from] ChatError),
}

/// Load every `*.json` file in `dir` as a scene, in file-name order.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>, GatewayError> {
    let dir_err = |source| GatewayError::ScenesDir {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(dir_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|path| load_scene_file(&path).map_err(|source| GatewayError::Scene { path, source }))
        .collect()
}

/// Backends a session may pick by name. The http entry exists only when the
/// server was configured with an endpoint.
#[derive(Clone)]
pub struct Backends {
    pub default: BackendKind,
    pub mock: Arc<dyn LlmBackend>,
    pub http: Option<Arc<dyn LlmBackend>>,
}

impl Backends {
    pub fn from_config(config: &LlmBackendConfig) -> Result<Self, ChatError> {
        let mock = LlmBackendConfig::mock(config.script.clone()).build()?;
        let http = match config.endpoint {
            Some(_) => Some(
                LlmBackendConfig {
                    kind: BackendKind::Http,
                    ..config.clone()
                }
                .build()?,
            ),
            None => None,
        };
        Ok(Self {
            default: config.kind,
            mock,
            http,
        })
    }

    pub fn pick(&self, kind: Option<BackendKind>) -> Option<Arc<dyn LlmBackend>> {
        match kind.unwrap_or(self.default) {
            BackendKind::Mock => Some(self.mock.clone()),
            BackendKind::Http => self.http.clone(),
        }
    }
}

pub struct AppState {
    pub scenes: BTreeMap<String, Scene>,
    pub store: SessionStore,
    pub pipeline: ContextPipeline,
    pub backends: Backends,
}

impl AppState {
    pub fn new(scenes: Vec<Scene>, pipeline: ContextPipeline, backends: Backends) -> Result<Self, GatewayError> {
        let mut map = BTreeMap::new();
        for scene in scenes {
            let id = scene.id.clone();
            if map.insert(id.clone(), scene).is_some() {
                return Err(GatewayError::DuplicateScene(id));
            }
        }
        Ok(Self {
            scenes: map,
            store: SessionStore::new(),
            pipeline,
            backends,
        })
    }

    pub fn from_config(config: &ServerConfig) -> Result<Self, GatewayError> {
        let scenes = load_scene_dir(&config.scenes_dir)?;
        let mut pipeline = ContextPipeline {
            radius_m: config.radius_m,
            ..ContextPipeline::default()
        };
        if let Some(path) = &config.support_prompt {
            pipeline.support_prompt = std::fs::read_to_string(path).map_err(|source| GatewayError::Prompt {
                path: path.clone(),
                source,
            })?;
        }
        if let SegmentationSource::Http { url, timeout } = &config.segmentation {
            pipeline.segmentation = Arc::new(HttpSegmentation::new(url.clone(), *timeout));
        }
        Self::new(scenes, pipeline, Backends::from_config(&config.backend)?)
    }
}

/// Serve `router` on an already-bound listener until the future is dropped
/// or `shutdown` resolves.
pub async fn serve(
    state: Arc<AppState>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
