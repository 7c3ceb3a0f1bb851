//! Hardware-free device simulation: a virtual scope rendering scripted
//! scenes and a virtual wand replaying scripted touch timelines.

pub mod scene;
pub mod sprites;
pub mod wand;

use thiserror::Error;

pub use scene::{
    run_scope, serve_scope, Background, Keyframe, OcclusionSpan, Placement, SceneRenderer,
    SceneScript, VirtualScope, DEFAULT_FPS, OCCLUDER_RGB,
};
pub use sprites::{builtin_sprite, builtin_sprites, Sprite, SPRITE_NAMES, SPRITE_SIZE};
pub use wand::{record_utterance, run_wand, Utterance, WandEvent, WandScript};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DevsimError {
    #[error("invalid script: {0}")]
    Script(String),
    #[error("unknown sprite `{0}`")]
    UnknownSprite(String),
    #[error("I/O failure: {0}")]
    Io(String),
}
