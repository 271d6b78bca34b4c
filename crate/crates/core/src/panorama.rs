//! Four-view capture description and the quadrant tag contract.
//!
//! Rendering and image tagging happen outside this crate. A segmentation
//! backend receives the capture description and answers with tags grouped by
//! view; two backends ship here, a fixture reader and an HTTP client.

use std::path::PathBuf;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::scene::{Scene, Vec3};

pub const VIEW_FOV_DEG: f64 = 90.0;
pub const DEFAULT_SEGMENTATION_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Front,
    Left,
    Right,
    Behind,
}

impl View {
    /// Capture order used by the tagging service.
    pub const CAPTURE_ORDER: [View; 4] = [View::Front, View::Left, View::Right, View::Behind];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaptureSpec {
    pub eye_position: Vec3,
    /// NPC yaw the front view is aligned with.
    pub yaw_deg: f64,
    pub view_order: [View; 4],
    pub fov_deg: f64,
    pub exclusions: Vec<String>,
}

pub fn build_capture_spec(scene: &Scene) -> CaptureSpec {
    CaptureSpec {
        eye_position: scene.npc.position + Vec3::new(0.0, 0.0, scene.npc.eye_height),
        yaw_deg: scene.npc.yaw_deg,
        view_order: View::CAPTURE_ORDER,
        fov_deg: VIEW_FOV_DEG,
        exclusions: scene.excluded_ids().map(str::to_owned).collect(),
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TagParseError {
    #[error("tag payload is not valid JSON: {0}")]
    Json(String),
    #[error("tag payload must be a JSON object")]
    NotAnObject,
    #[error("missing quadrant key {0:?}")]
    MissingKey(&'static str),
    #[error("both \"front\" and \"in-front\" present")]
    AmbiguousFront,
    #[error("quadrant {0:?} is not an array")]
    NotAnArray(String),
    #[error("quadrant {0:?} contains a non-string element")]
    NonStringTag(String),
}

/// Object tags grouped by capture view.
///
/// Tags are trimmed, lowercased, non-empty and unique within a quadrant; source
/// order is kept. The same tag may appear under several quadrants.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct QuadrantTags {
    pub left: Vec<String>,
    #[serde(rename = "in-front")]
    pub front: Vec<String>,
    pub right: Vec<String>,
    pub behind: Vec<String>,
}

impl QuadrantTags {
    /// Build from raw tag lists, applying the normalization rules.
    pub fn new<S: AsRef<str>>(left: &[S], front: &[S], right: &[S], behind: &[S]) -> Self {
        Self {
            left: normalize_tags(left.iter().map(AsRef::as_ref)),
            front: normalize_tags(front.iter().map(AsRef::as_ref)),
            right: normalize_tags(right.iter().map(AsRef::as_ref)),
            behind: normalize_tags(behind.iter().map(AsRef::as_ref)),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.quadrants().iter().all(|(_, tags)| tags.is_empty())
    }

    /// Quadrants in wire order, keyed by their wire names.
    pub fn quadrants(&self) -> [(&'static str, &[String]); 4] {
        [
            ("left", &self.left),
            ("in-front", &self.front),
            ("right", &self.right),
            ("behind", &self.behind),
        ]
    }

    pub fn total(&self) -> usize {
        self.quadrants().iter().map(|(_, t)| t.len()).sum()
    }
}

fn normalize_tags<'a>(raw: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for tag in raw {
        let tag = tag.trim().to_lowercase();
        if !tag.is_empty() && !out.contains(&tag) {
            out.push(tag);
        }
    }
    out
}

pub fn parse_quadrant_tags(bytes: &[u8]) -> Result<QuadrantTags, TagParseError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| TagParseError::Json(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(TagParseError::NotAnObject);
    };
    let front_key = match (map.contains_key("in-front"), map.contains_key("front")) {
        (true, true) => return Err(TagParseError::AmbiguousFront),
        (false, true) => "front",
        _ => "in-front",
    };
    let list = |key: &'static str| -> Result<Vec<String>, TagParseError> {
        let Some(v) = map.get(key) else {
            return Err(TagParseError::MissingKey(key));
        };
        let Value::Array(items) = v else {
            return Err(TagParseError::NotAnArray(key.into()));
        };
        let strs = items
            .iter()
            .map(|i| i.as_str().ok_or_else(|| TagParseError::NonStringTag(key.into())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(normalize_tags(strs.into_iter()))
    };
    Ok(QuadrantTags {
        left: list("left")?,
        front: list(front_key)?,
        right: list("right")?,
        behind: list("behind")?,
    })
}

/// Compact JSON with keys `left`, `in-front`, `right`, `behind` in that order.
pub fn serialize_quadrant_tags(tags: &QuadrantTags) -> String {
    serde_json::to_string(tags).expect("string lists always serialize")
}

/// Like [`serialize_quadrant_tags`], but each quadrant keeps at most `max` tags
/// followed by a `+N more` marker when tags were dropped.
pub fn serialize_truncated(tags: &QuadrantTags, max: usize) -> String {
    let mut out = String::from("{");
    for (i, (key, list)) in tags.quadrants().into_iter().enumerate() {
        let mut items: Vec<Value> = list.iter().take(max).cloned().map(Value::String).collect();
        if list.len() > max {
            items.push(Value::String(format!("+{} more", list.len() - max)));
        }
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!("{:?}:{}", key, Value::Array(items)));
    }
    out.push('}');
    out
}

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("segmentation backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("segmentation backend unreachable: {0}")]
    Transport(String),
    #[error("segmentation backend returned status {status}")]
    Status { status: u16 },
    #[error("malformed segmentation response: {0}")]
    Malformed(#[from] TagParseError),
    #[error("scene {0:?} has no tag fixture")]
    MissingFixture(String),
    #[error("cannot read tag fixture {path}: {source}")]
    FixtureIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[async_trait]
pub trait SegmentationBackend: Send + Sync {
    async fn tag(&self, spec: &CaptureSpec, scene: &Scene) -> Result<QuadrantTags, SegmentationError>;
}

/// Reads the scene's canned tag file.
#[derive(Debug, Clone, Default)]
pub struct FixtureSegmentation;

#[async_trait]
impl SegmentationBackend for FixtureSegmentation {
    async fn tag(&self, _spec: &CaptureSpec, scene: &Scene) -> Result<QuadrantTags, SegmentationError> {
        let path = scene
            .tag_fixture
            .as_ref()
            .ok_or_else(|| SegmentationError::MissingFixture(scene.id.clone()))?;
        let bytes = tokio::fs::read(path)
            .await
            .map_err(|source| SegmentationError::FixtureIo {
                path: path.clone(),
                source,
            })?;
        Ok(parse_quadrant_tags(&bytes)?)
    }
}

#[derive(Serialize)]
struct TagRequest<'a> {
    scene_id: &'a str,
    views: [View; 4],
}

/// Client for a tagging service exposing `POST /tag`.
#[derive(Debug, Clone)]
pub struct HttpSegmentation {
    base_url: String,
    timeout: Duration,
    client: reqwest::Client,
}

impl HttpSegmentation {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout,
            client: reqwest::Client::new(),
        }
    }
}

#[async_trait]
impl SegmentationBackend for HttpSegmentation {
    async fn tag(&self, spec: &CaptureSpec, scene: &Scene) -> Result<QuadrantTags, SegmentationError> {
        let body = TagRequest {
            scene_id: &scene.id,
            views: spec.view_order,
        };
        let resp = self
            .client
            .post(format!("{}/tag", self.base_url))
            .timeout(self.timeout)
            .json(&body)
            .send()
            .await
            .map_err(|e| {
                if e.is_timeout() {
                    SegmentationError::Timeout(self.timeout)
                } else {
                    SegmentationError::Transport(e.to_string())
                }
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(SegmentationError::Status {
                status: status.as_u16(),
            });
        }
        let bytes = resp.bytes().await.map_err(|e| {
            if e.is_timeout() {
                SegmentationError::Timeout(self.timeout)
            } else {
                SegmentationError::Transport(e.to_string())
            }
        })?;
        Ok(parse_quadrant_tags(&bytes)?)
    }
}
