//! Egocentric direction words for NPC-frame vectors.
//!
//! Vectors here are in the NPC frame (+X left, +Y front, +Z up). The player
//! stands in front of the NPC facing it, so the player's left is the NPC's right
//! and the player's front is the NPC's back.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::Vec3;

const HORIZONTAL_EPS: f64 = 1e-9;
/// Sector positions within this many sectors of a half-sector boundary count as ties.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DirectionError {
    #[error("no horizontal direction")]
    NoHorizontalDirection,
    #[error("unsupported sector count {0}, expected 4, 8 or 16")]
    UnsupportedSectorCount(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CardinalDirection {
    Front,
    Behind,
    Left,
    Right,
}

impl CardinalDirection {
    pub const ALL: [CardinalDirection; 4] = [Self::Front, Self::Behind, Self::Left, Self::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Front => "front",
            Self::Behind => "behind",
            Self::Left => "left",
            Self::Right => "right",
        }
    }
}

impl fmt::Display for CardinalDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerticalBand {
    Above,
    Level,
    Below,
}

impl VerticalBand {
    pub const ALL: [VerticalBand; 3] = [Self::Above, Self::Level, Self::Below];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Above => "above",
            Self::Level => "level",
            Self::Below => "below",
        }
    }
}

impl fmt::Display for VerticalBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Elevation beyond which an object reads as above or below (sin 30°).
pub const VERTICAL_THRESHOLD: f64 = 0.5;
/// Slack on the threshold so vectors written to three decimals that sit on
/// the 30° boundary, like (0, 0.866, 0.5), still read as level.
pub const VERTICAL_SLACK: f64 = 1e-4;

/// Front/behind wins ties where |x| = |y|.
pub fn classify_cardinal(v: Vec3) -> Result<CardinalDirection, DirectionError> {
    if v.horizontal_norm() <= HORIZONTAL_EPS {
        return Err(DirectionError::NoHorizontalDirection);
    }
    Ok(if v.y.abs() >= v.x.abs() {
        if v.y > 0.0 {
            CardinalDirection::Front
        } else {
            CardinalDirection::Behind
        }
    } else if v.x > 0.0 {
        CardinalDirection::Left
    } else {
        CardinalDirection::Right
    })
}

pub fn classify_vertical(v: Vec3) -> VerticalBand {
    let n = v.norm();
    if n == 0.0 {
        return VerticalBand::Level;
    }
    let elevation = v.z / n;
    if elevation > VERTICAL_THRESHOLD + VERTICAL_SLACK {
        VerticalBand::Above
    } else if elevation < -(VERTICAL_THRESHOLD + VERTICAL_SLACK) {
        VerticalBand::Below
    } else {
        VerticalBand::Level
    }
}

/// Mapping between NPC-relative and player-relative direction words.
pub trait FlipToPlayer: Sized {
    fn flip_to_player(self) -> Self;
}

impl FlipToPlayer for CardinalDirection {
    fn flip_to_player(self) -> Self {
        match self {
            Self::Front => Self::Behind,
            Self::Behind => Self::Front,
            Self::Left => Self::Right,
            Self::Right => Self::Left,
        }
    }
}

impl FlipToPlayer for VerticalBand {
    fn flip_to_player(self) -> Self {
        self
    }
}

/// The player-frame version of an NPC-frame vector: horizontal axes mirrored.
impl FlipToPlayer for Vec3 {
    fn flip_to_player(self) -> Self {
        Vec3::new(-self.x, -self.y, self.z)
    }
}

pub fn flip_to_player<T: FlipToPlayer>(d: T) -> T {
    d.flip_to_player()
}

const LABELS_4: [&str; 4] = ["front", "right", "behind", "left"];
const LABELS_8: [&str; 8] = [
    "front",
    "front-right",
    "right",
    "behind-right",
    "behind",
    "behind-left",
    "left",
    "front-left",
];
const LABELS_16: [&str; 16] = [
    "front",
    "front-front-right",
    "front-right",
    "right-front-right",
    "right",
    "right-behind-right",
    "behind-right",
    "behind-behind-right",
    "behind",
    "behind-behind-left",
    "behind-left",
    "left-behind-left",
    "left",
    "left-front-left",
    "front-left",
    "front-front-left",
];

/// Number of horizontal sectors in a quantized direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum SectorCount {
    Four,
    Eight,
    Sixteen,
}

impl SectorCount {
    pub fn get(self) -> usize {
        match self {
            Self::Four => 4,
            Self::Eight => 8,
            Self::Sixteen => 16,
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Self::Four => &LABELS_4,
            Self::Eight => &LABELS_8,
            Self::Sixteen => &LABELS_16,
        }
    }
}

impl TryFrom<u8> for SectorCount {
    type Error = DirectionError;
    fn try_from(n: u8) -> Result<Self, Self::Error> {
        match n {
            4 => Ok(Self::Four),
            8 => Ok(Self::Eight),
            16 => Ok(Self::Sixteen),
            other => Err(DirectionError::UnsupportedSectorCount(other)),
        }
    }
}

impl From<SectorCount> for u8 {
    fn from(n: SectorCount) -> u8 {
        n.get() as u8
    }
}

impl fmt::Display for SectorCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.get())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SectorLabel {
    pub n_sectors: SectorCount,
    pub index: usize,
    pub label: &'static str,
}

/// Snap a horizontal direction to the nearest of `n` sectors.
///
/// Sector 0 is centered on the NPC's front and indices run clockwise seen from
/// above (front, right, behind, left for n = 4). A direction exactly between two
/// sectors takes the smaller index.
pub fn quantize_sectors(v: Vec3, n: SectorCount) -> Result<SectorLabel, DirectionError> {
    if v.horizontal_norm() <= HORIZONTAL_EPS {
        return Err(DirectionError::NoHorizontalDirection);
    }
    let count = n.get();
    // clockwise from front; the NPC's right is -X
    let theta = (-v.x).atan2(v.y).rem_euclid(TAU);
    let pos = theta / (TAU / count as f64);
    let lower = pos.floor();
    let frac = pos - lower;
    let a = (lower as usize) % count;
    let b = (a + 1) % count;
    let index = if (frac - 0.5).abs() <= BOUNDARY_EPS {
        a.min(b)
    } else if frac < 0.5 {
        a
    } else {
        b
    };
    Ok(SectorLabel {
        n_sectors: n,
        index,
        label: n.labels()[index],
    })
}
