//! Spatial context for LLM-driven NPCs.
//!
//! The pipeline turns a static scene snapshot into two kinds of context about
//! the NPC's surroundings: object tags grouped by the four capture views, and
//! unit vectors to named objects within a fixed radius. Both are composed with
//! a support prompt into a system message that opens a chat session.
//!
//! ```
//! use npc_spatial::compose::{compose_context, preset};
//! use npc_spatial::radial::serialize_radial;
//!
//! let bundle = compose_context(&preset(3).unwrap(), "You guard the gate.", None, None).unwrap();
//! assert_eq!(bundle.text(), "You guard the gate.");
//! assert_eq!(serialize_radial(&[]), "");
//! ```

pub mod chat;
pub mod compose;
pub mod direction;
pub mod panorama;
pub mod radial;
pub mod scene;

pub use chat::{ChatError, ChatMessage, ChatSession, ContextPipeline, LlmBackend, LlmBackendConfig};
pub use compose::{compose_context, preset, AblationConfig, ContextBundle};
pub use scene::{load_scene, load_scene_file, NpcPose, Scene, SceneObject, Vec3};
