//! Bounding-sphere selection of named objects around the NPC.
//!
//! Objects are points; an object is selected when its origin lies inside the
//! query sphere centered on the NPC. Each hit carries the unit vector from the
//! NPC to the object, expressed in the NPC frame.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::scene::{world_to_npc_frame, Scene, Vec3};

pub const DEFAULT_RADIUS_M: f64 = 10.0;
/// Objects closer than this to the NPC have no usable direction.
pub const COINCIDENT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialHit {
    pub object_id: String,
    pub asset_name: String,
    pub direction: Vec3,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedObject {
    pub object_id: String,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RadialSelection {
    pub hits: Vec<RadialHit>,
    pub skipped: Vec<SkippedObject>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("query radius must be positive and finite, got {0}")]
pub struct InvalidRadius(pub f64);

pub fn select_radial(scene: &Scene, radius: f64) -> Result<RadialSelection, InvalidRadius> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(InvalidRadius(radius));
    }
    let origin = scene.npc.position;
    let mut selection = RadialSelection::default();
    for obj in scene.objects.iter().filter(|o| !o.excluded) {
        let offset = obj.position - origin;
        let distance = offset.norm();
        if distance > radius {
            continue;
        }
        if distance < COINCIDENT_EPS {
            tracing::warn!(object = %obj.id, "object coincides with the NPC, skipping");
            selection.skipped.push(SkippedObject {
                object_id: obj.id.clone(),
                reason: "coincident with npc position",
            });
            continue;
        }
        let local = world_to_npc_frame(offset, &scene.npc);
        selection.hits.push(RadialHit {
            object_id: obj.id.clone(),
            asset_name: obj.asset_name.clone(),
            direction: local * (1.0 / distance),
            distance,
        });
    }
    selection
        .hits
        .sort_by(|a, b| (&a.asset_name, &a.object_id).cmp(&(&b.asset_name, &b.object_id)));
    Ok(selection)
}

/// Fixed three-decimal rendering, rounding half away from zero on the decimal
/// value as written. Negative zero prints as `0.000`.
pub fn format_component(v: f64) -> String {
    let scaled = (v * 1000.0).round();
    let scaled = if scaled == 0.0 { 0.0 } else { scaled };
    let sign = if scaled < 0.0 { "-" } else { "" };
    let abs = scaled.abs() as u64;
    format!("{sign}{}.{:03}", abs / 1000, abs % 1000)
}

pub fn vector_line(name: &str, direction: Vec3) -> String {
    format!(
        "{name}, VEC:X={} Y={} Z={}",
        format_component(direction.x),
        format_component(direction.y),
        format_component(direction.z)
    )
}

/// One `<name>, VEC:X=.. Y=.. Z=..` line per hit, newline-separated.
pub fn serialize_radial(hits: &[RadialHit]) -> String {
    let mut out = String::new();
    for (i, hit) in hits.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&vector_line(&hit.asset_name, hit.direction));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("malformed vector line: {0:?}")]
pub struct MalformedVectorLine(pub String);

/// Parse one serialized vector line back into a name and vector.
pub fn parse_vector_line(line: &str) -> Result<(String, Vec3), MalformedVectorLine> {
    let bad = || MalformedVectorLine(line.to_string());
    let (name, rest) = line.rsplit_once(", VEC:").ok_or_else(bad)?;
    let mut parts = rest.split(' ');
    let mut component = |prefix: &str| -> Result<f64, MalformedVectorLine> {
        parts
            .next()
            .and_then(|p| p.strip_prefix(prefix))
            .and_then(|p| p.parse().ok())
            .ok_or_else(bad)
    };
    let x = component("X=")?;
    let y = component("Y=")?;
    let z = component("Z=")?;
    if parts.next().is_some() || name.is_empty() {
        return Err(bad());
    }
    Ok((name.to_string(), Vec3::new(x, y, z)))
}

/// Turn an engine asset name into plain lowercase words.
///
/// `Simple_Brazier03` becomes `simple brazier`. Digit runs at the end of each
/// word are dropped; a name made only of digits falls back to the lowercased
/// original.
pub fn humanize_asset_name(name: &str) -> String {
    let mut words: Vec<String> = Vec::new();
    for chunk in name.split(|c: char| c == '_' || c == '-' || c.is_whitespace()) {
        let mut current = String::new();
        let mut prev: Option<char> = None;
        for c in chunk.chars() {
            let boundary = match prev {
                Some(p) => c.is_uppercase() && (p.is_lowercase() || p.is_ascii_digit()),
                None => false,
            };
            if boundary && !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            current.push(c);
            prev = Some(c);
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    let cleaned: Vec<String> = words
        .into_iter()
        .map(|w| w.trim_end_matches(|c: char| c.is_ascii_digit()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect();
    if cleaned.is_empty() {
        name.to_lowercase()
    } else {
        cleaned.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupedHit {
    pub base_name: String,
    pub count: usize,
    pub representative_direction: Vec3,
}

const MEAN_EPS: f64 = 1e-9;

/// Merge hits sharing a humanized name. Groups keep first-appearance order.
pub fn group_plural(hits: &[RadialHit]) -> Vec<GroupedHit> {
    struct Acc {
        name: String,
        count: usize,
        sum: Vec3,
        first: Vec3,
    }
    let mut groups: Vec<Acc> = Vec::new();
    for hit in hits {
        let name = humanize_asset_name(&hit.asset_name);
        match groups.iter_mut().find(|g| g.name == name) {
            Some(g) => {
                g.count += 1;
                g.sum = g.sum + hit.direction;
            }
            None => groups.push(Acc {
                name,
                count: 1,
                sum: hit.direction,
                first: hit.direction,
            }),
        }
    }
    groups
        .into_iter()
        .map(|g| GroupedHit {
            representative_direction: (g.sum * (1.0 / g.count as f64))
                .normalized(MEAN_EPS)
                .unwrap_or(g.first),
            base_name: g.name,
            count: g.count,
        })
        .collect()
}

/// Render grouped hits as a comma-separated summary such as `barrel x2, shelf`.
pub fn describe_groups(groups: &[GroupedHit]) -> String {
    let mut out = String::new();
    for (i, g) in groups.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&g.base_name);
        if g.count > 1 {
            let _ = write!(out, " x{}", g.count);
        }
    }
    out
}
