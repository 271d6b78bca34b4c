//! Assembly of the NPC's background context.
//!
//! Up to three blocks go into a single system message, in this order: the
//! support prompt, the quadrant tag JSON, and the nearby-object lines. An
//! [`AblationConfig`] decides which blocks are present.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::direction::{classify_vertical, quantize_sectors, FlipToPlayer, SectorCount};
use crate::panorama::{serialize_truncated, QuadrantTags};
use crate::radial::{vector_line, RadialHit};

pub const TAGS_HEADER: &str = "Environment tags (JSON):";
pub const RADIAL_HEADER: &str = "Nearby objects with directional vectors:";
pub const DEFAULT_MAX_TAGS_PER_QUADRANT: usize = 32;

/// Support prompt bundled with the crate.
pub const DEFAULT_SUPPORT_PROMPT: &str = include_str!("../fixtures/prompts/quest_giver.txt");
/// Shorter variant with a word budget.
pub const CONCISE_SUPPORT_PROMPT: &str = include_str!("../fixtures/prompts/quest_giver_concise.txt");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ComposeError {
    #[error("ablation preset must be 1..=4, got {0}")]
    UnknownPreset(u8),
    #[error("at least one context block must be enabled")]
    NothingEnabled,
    #[error("max_tags_per_quadrant must be positive")]
    ZeroTagBudget,
    #[error("{0} block enabled but its input is missing")]
    MissingInput(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub use_support_prompt: bool,
    pub use_segmentation: bool,
    pub use_radial: bool,
    #[serde(default)]
    pub quantize_directions: Option<SectorCount>,
    #[serde(default = "default_max_tags")]
    pub max_tags_per_quadrant: usize,
    #[serde(default)]
    pub pre_flip_to_player: bool,
}

fn default_max_tags() -> usize {
    DEFAULT_MAX_TAGS_PER_QUADRANT
}

impl AblationConfig {
    pub fn new(use_support_prompt: bool, use_segmentation: bool, use_radial: bool) -> Self {
        Self {
            use_support_prompt,
            use_segmentation,
            use_radial,
            quantize_directions: None,
            max_tags_per_quadrant: DEFAULT_MAX_TAGS_PER_QUADRANT,
            pre_flip_to_player: false,
        }
    }

    pub fn validate(&self) -> Result<(), ComposeError> {
        if !(self.use_support_prompt || self.use_segmentation || self.use_radial) {
            return Err(ComposeError::NothingEnabled);
        }
        if self.max_tags_per_quadrant == 0 {
            return Err(ComposeError::ZeroTagBudget);
        }
        Ok(())
    }
}

/// The four study configurations:
///
/// | id | support prompt | tags | radial |
/// |----|----------------|------|--------|
/// | 1  | yes            | yes  | yes    |
/// | 2  | no             | yes  | no     |
/// | 3  | yes            | no   | no     |
/// | 4  | yes            | no   | yes    |
pub fn preset(test_id: u8) -> Result<AblationConfig, ComposeError> {
    let (prompt, tags, radial) = match test_id {
        1 => (true, true, true),
        2 => (false, true, false),
        3 => (true, false, false),
        4 => (true, false, true),
        other => return Err(ComposeError::UnknownPreset(other)),
    };
    Ok(AblationConfig::new(prompt, tags, radial))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BlockProvenance {
    pub included: bool,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub role: Role,
    pub support_prompt: BlockProvenance,
    pub segmentation: BlockProvenance,
    pub radial: BlockProvenance,
    pub quantize_directions: Option<SectorCount>,
    pub pre_flip_to_player: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextMessage {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub messages: Vec<ContextMessage>,
    pub provenance: Provenance,
}

impl ContextBundle {
    /// Concatenated text of every context message.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// One radial hit rendered as a sector label instead of a raw vector, e.g.
/// `Barrel1, DIR=front, level`.
pub fn sector_line(hit: &RadialHit, n: SectorCount, player_view: bool) -> String {
    let dir = if player_view {
        hit.direction.flip_to_player()
    } else {
        hit.direction
    };
    let band = classify_vertical(dir);
    match quantize_sectors(dir, n) {
        Ok(sector) => format!("{}, DIR={}, {}", hit.asset_name, sector.label, band),
        // straight up or down has no sector
        Err(_) => format!("{}, DIR={}", hit.asset_name, band),
    }
}

/// The line one hit contributes to the radial block under `config`.
pub fn radial_line(config: &AblationConfig, hit: &RadialHit) -> String {
    match config.quantize_directions {
        Some(n) => sector_line(hit, n, config.pre_flip_to_player),
        None if config.pre_flip_to_player => vector_line(&hit.asset_name, hit.direction.flip_to_player()),
        None => vector_line(&hit.asset_name, hit.direction),
    }
}

fn radial_block(config: &AblationConfig, hits: &[RadialHit]) -> String {
    let mut header = RADIAL_HEADER.to_string();
    if config.pre_flip_to_player {
        header.insert_str(header.len() - 1, " (player perspective)");
    }
    let body = hits
        .iter()
        .map(|h| radial_line(config, h))
        .collect::<Vec<_>>()
        .join("\n");
    let mut out = header;
    if !body.is_empty() {
        let _ = write!(out, "\n{body}");
    }
    out
}

pub fn compose_context(
    config: &AblationConfig,
    support_prompt: &str,
    tags: Option<&QuadrantTags>,
    radial: Option<&[RadialHit]>,
) -> Result<ContextBundle, ComposeError> {
    config.validate()?;
    let mut blocks: Vec<String> = Vec::new();
    let mut provenance = Provenance {
        role: Role::System,
        support_prompt: BlockProvenance::default(),
        segmentation: BlockProvenance::default(),
        radial: BlockProvenance::default(),
        quantize_directions: config.quantize_directions,
        pre_flip_to_player: config.pre_flip_to_player,
    };

    if config.use_support_prompt {
        let support_prompt = support_prompt.trim_end();
        provenance.support_prompt = BlockProvenance {
            included: true,
            bytes: support_prompt.len(),
        };
        blocks.push(support_prompt.to_string());
    }
    if config.use_segmentation {
        let tags = tags.ok_or(ComposeError::MissingInput("segmentation"))?;
        let block = format!(
            "{TAGS_HEADER}\n{}",
            serialize_truncated(tags, config.max_tags_per_quadrant)
        );
        provenance.segmentation = BlockProvenance {
            included: true,
            bytes: block.len(),
        };
        blocks.push(block);
    }
    if config.use_radial {
        let hits = radial.ok_or(ComposeError::MissingInput("radial"))?;
        let block = radial_block(config, hits);
        provenance.radial = BlockProvenance {
            included: true,
            bytes: block.len(),
        };
        blocks.push(block);
    }

    let text = blocks.join("\n\n");
    Ok(ContextBundle {
        messages: vec![ContextMessage {
            role: Role::System,
            text,
        }],
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Vec3;

    fn hits() -> Vec<RadialHit> {
        [
            ("Simple_Shelf2", Vec3::new(-0.940, -0.340, 0.0)),
            ("Barrel1", Vec3::new(0.348, 0.937, 0.0)),
        ]
        .into_iter()
        .map(|(n, d)| RadialHit {
            object_id: n.into(),
            asset_name: n.into(),
            direction: d,
            distance: 3.0,
        })
        .collect()
    }

    fn tags() -> QuadrantTags {
        QuadrantTags::new(
            &["cabinet", "pottery", "closet"],
            &["barrel", "basement"],
            &["altar", "basement", "candle"],
            &["altar", "candle"],
        )
    }

    #[test]
    fn presets() {
        assert_eq!(preset(1).unwrap(), AblationConfig::new(true, true, true));
        assert_eq!(preset(2).unwrap(), AblationConfig::new(false, true, false));
        assert_eq!(preset(3).unwrap(), AblationConfig::new(true, false, false));
        assert_eq!(preset(4).unwrap(), AblationConfig::new(true, false, true));
        assert_eq!(preset(5), Err(ComposeError::UnknownPreset(5)));
        assert_eq!(preset(0), Err(ComposeError::UnknownPreset(0)));
    }

    #[test]
    fn preset_3_is_prompt_only() {
        let bundle = compose_context(&preset(3).unwrap(), "Be wise.", None, None).unwrap();
        assert_eq!(bundle.text(), "Be wise.");
        assert!(bundle.provenance.support_prompt.included);
        assert!(!bundle.provenance.segmentation.included);
        assert!(!bundle.provenance.radial.included);
        assert_eq!(bundle.provenance.support_prompt.bytes, 8);
    }

    #[test]
    fn preset_1_embeds_all_blocks() {
        let h = hits();
        let bundle = compose_context(&preset(1).unwrap(), "Be wise.", Some(&tags()), Some(&h)).unwrap();
        let text = bundle.text();
        assert_eq!(
            text,
            "Be wise.\n\n\
             Environment tags (JSON):\n\
             {\"left\":[\"cabinet\",\"pottery\",\"closet\"],\"in-front\":[\"barrel\",\"basement\"],\"right\":[\"altar\",\"basement\",\"candle\"],\"behind\":[\"altar\",\"candle\"]}\n\n\
             Nearby objects with directional vectors:\n\
             Simple_Shelf2, VEC:X=-0.940 Y=-0.340 Z=0.000\n\
             Barrel1, VEC:X=0.348 Y=0.937 Z=0.000"
        );
        assert_eq!(bundle.messages.len(), 1);
        assert_eq!(bundle.messages[0].role, Role::System);
    }

    #[test]
    fn truncates_tags() {
        let mut config = preset(2).unwrap();
        config.max_tags_per_quadrant = 2;
        let bundle = compose_context(&config, "", Some(&tags()), None).unwrap();
        assert!(bundle
            .text()
            .contains(r#""left":["cabinet","pottery","+1 more"]"#));
    }

    #[test]
    fn quantized_and_flipped_lines() {
        let h = hits();
        let mut config = preset(4).unwrap();
        config.quantize_directions = Some(SectorCount::Four);
        let text = compose_context(&config, "P", None, Some(&h)).unwrap().text();
        assert!(text.ends_with("Simple_Shelf2, DIR=right, level\nBarrel1, DIR=front, level"));
        assert!(!text.contains("VEC:"));

        config.pre_flip_to_player = true;
        let text = compose_context(&config, "P", None, Some(&h)).unwrap().text();
        assert!(text.contains("Nearby objects with directional vectors (player perspective):\n"));
        assert!(text.ends_with("Simple_Shelf2, DIR=left, level\nBarrel1, DIR=behind, level"));

        config.quantize_directions = None;
        let text = compose_context(&config, "P", None, Some(&h)).unwrap().text();
        assert!(text.ends_with("Simple_Shelf2, VEC:X=0.940 Y=0.340 Z=0.000\nBarrel1, VEC:X=-0.348 Y=-0.937 Z=0.000"));
    }

    #[test]
    fn missing_inputs_and_empty_config() {
        assert_eq!(
            compose_context(&preset(1).unwrap(), "P", None, Some(&[])),
            Err(ComposeError::MissingInput("segmentation"))
        );
        assert_eq!(
            compose_context(&preset(4).unwrap(), "P", None, None),
            Err(ComposeError::MissingInput("radial"))
        );
        assert_eq!(
            compose_context(&AblationConfig::new(false, false, false), "P", None, None),
            Err(ComposeError::NothingEnabled)
        );
    }

    #[test]
    fn config_json_shape() {
        let cfg: AblationConfig = serde_json::from_str(
            r#"{"use_support_prompt":true,"use_segmentation":false,"use_radial":true,"quantize_directions":8}"#,
        )
        .unwrap();
        assert_eq!(cfg.quantize_directions, Some(SectorCount::Eight));
        assert_eq!(cfg.max_tags_per_quadrant, 32);
        assert!(serde_json::from_str::<AblationConfig>(
            r#"{"use_support_prompt":true,"use_segmentation":false,"use_radial":true,"quantize_directions":6}"#
        )
        .is_err());
    }

    #[test]
    fn trailing_whitespace_of_the_prompt_is_dropped() {
        let bundle = compose_context(&preset(3).unwrap(), "Guard the gate.\n\n", None, None).unwrap();
        assert_eq!(bundle.text(), "Guard the gate.");
        assert_eq!(bundle.provenance.support_prompt.bytes, "Guard the gate.".len());
    }
}
