//! Scene snapshots and the NPC egocentric frame.
//!
//! A scene is a static list of point objects around a single NPC. Positions are
//! meters in a right-handed world frame with +Z up. The NPC frame puts +X on the
//! NPC's left, +Y straight ahead and +Z up.

use std::collections::HashSet;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_EYE_HEIGHT: f64 = 1.7;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("failed to read scene file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scene file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scene: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const UP: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn horizontal_norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Unit vector in the same direction, or `None` when the norm is below `eps`.
    pub fn normalized(self, eps: f64) -> Option<Vec3> {
        let n = self.norm();
        (n > eps).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Vec3::new(x, y, z)
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Where the NPC stands and which way it faces.
///
/// `yaw_deg` rotates the NPC's front about world +Z, counterclockwise seen from
/// above, with 0 facing world +Y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NpcPose {
    pub position: Vec3,
    pub yaw_deg: f64,
    pub eye_height: f64,
}

impl NpcPose {
    pub fn new(position: Vec3, yaw_deg: f64) -> Self {
        Self {
            position,
            yaw_deg: normalize_yaw(yaw_deg),
            eye_height: DEFAULT_EYE_HEIGHT,
        }
    }

    pub fn front_axis(&self) -> Vec3 {
        let yaw = self.yaw_deg.to_radians();
        Vec3::new(-yaw.sin(), yaw.cos(), 0.0)
    }

    pub fn left_axis(&self) -> Vec3 {
        Vec3::UP.cross(self.front_axis())
    }
}

fn normalize_yaw(yaw: f64) -> f64 {
    let y = yaw.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if y >= 360.0 {
        0.0
    } else {
        y
    }
}

/// Express a world-frame offset in the NPC's egocentric frame.
pub fn world_to_npc_frame(offset: Vec3, pose: &NpcPose) -> Vec3 {
    Vec3::new(
        offset.dot(pose.left_axis()),
        offset.dot(pose.front_axis()),
        offset.z,
    )
}

/// Inverse of [`world_to_npc_frame`].
pub fn npc_to_world_frame(local: Vec3, pose: &NpcPose) -> Vec3 {
    pose.left_axis() * local.x + pose.front_axis() * local.y + Vec3::UP * local.z
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneObject {
    pub id: String,
    pub asset_name: String,
    pub position: Vec3,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scene {
    pub id: String,
    pub npc: NpcPose,
    pub objects: Vec<SceneObject>,
    /// Canned quadrant tags, resolved against the scene file's directory when
    /// loaded from disk.
    pub tag_fixture: Option<PathBuf>,
}

impl Scene {
    pub fn object(&self, id: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn excluded_ids(&self) -> impl Iterator<Item = &str> {
        self.objects
            .iter()
            .filter(|o| o.excluded)
            .map(|o| o.id.as_str())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    id: String,
    npc: NpcFile,
    objects: Vec<ObjectFile>,
    #[serde(default)]
    tag_fixture: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NpcFile {
    position: Vec3,
    yaw_deg: f64,
    #[serde(default)]
    eye_height: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectFile {
    id: String,
    name: String,
    position: Vec3,
    #[serde(default)]
    excluded: bool,
}

/// Parse and validate a scene file. A relative `tag_fixture` is kept as written.
pub fn load_scene(bytes: &[u8]) -> Result<Scene, SceneError> {
    let file: SceneFile = serde_json::from_slice(bytes)?;
    let invalid = |msg: String| Err(SceneError::Validation(msg));

    if file.id.trim().is_empty() {
        return invalid("scene id is empty".into());
    }
    if !file.npc.position.is_finite() || !file.npc.yaw_deg.is_finite() {
        return invalid("npc pose has a non-finite component".into());
    }
    let eye_height = file.npc.eye_height.unwrap_or(DEFAULT_EYE_HEIGHT);
    if !(eye_height.is_finite() && eye_height > 0.0) {
        return invalid(format!("eye_height must be positive, got {eye_height}"));
    }

    let mut seen = HashSet::new();
    let mut objects = Vec::with_capacity(file.objects.len());
    for obj in file.objects {
        if obj.id.is_empty() {
            return invalid("object id is empty".into());
        }
        if !seen.insert(obj.id.clone()) {
            return invalid(format!("duplicate object id {:?}", obj.id));
        }
        if obj.name.trim().is_empty() {
            return invalid(format!("object {:?} has an empty name", obj.id));
        }
        if !obj.position.is_finite() {
            return invalid(format!("object {:?} has a non-finite coordinate", obj.id));
        }
        objects.push(SceneObject {
            id: obj.id,
            asset_name: obj.name,
            position: obj.position,
            excluded: obj.excluded,
        });
    }

    Ok(Scene {
        id: file.id,
        npc: NpcPose {
            position: file.npc.position,
            yaw_deg: normalize_yaw(file.npc.yaw_deg),
            eye_height,
        },
        objects,
        tag_fixture: file.tag_fixture.map(PathBuf::from),
    })
}

/// Load a scene from disk, resolving `tag_fixture` relative to the file.
pub fn load_scene_file(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut scene = load_scene(&bytes)?;
    if let Some(fixture) = scene.tag_fixture.take() {
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        scene.tag_fixture = Some(if fixture.is_relative() {
            base.join(fixture)
        } else {
            fixture
        });
    }
    Ok(scene)
}
