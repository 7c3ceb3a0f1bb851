//! The session: wand handling, active-object tracking, acquaintance and
//! bonding cycles, plus the scripted simulator and the session API.

pub mod acquaint;
pub mod api;
pub mod bonding;
pub mod session;
pub mod simulate;
pub mod state;
pub mod workspace;

use thiserror::Error;

pub use acquaint::{acquaint, AcquaintOptions, Acquaintance, ACQUAINT_FRAMES};
pub use api::{ApiServer, Command, EventKind, SessionEvent};
pub use bonding::{run_bonding_cycle, BondingParams, CycleOutcome, CycleReport, CycleStage};
pub use session::{Microphone, ScriptedMicrophone, Session, SessionConfig, TypedMicrophone};
pub use simulate::{acquaint_scene_objects, metrics_report, simulate, SimulationReport};
pub use state::{
    choose_active, handle_wand, FrameOutcome, SessionState, Tracker, WandEffect, WandOutcome,
    DEFAULT_GRACE_MS, MAX_RECORDING_MS,
};
pub use workspace::{ObjectProfile, ObjectRegistry, Workspace};

use crate::backends::BackendError;
use crate::devsim::DevsimError;
use crate::dialogue::DialogueError;
use crate::persona::PersonaError;
use crate::vision::VisionError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error(transparent)]
    Persona(#[from] PersonaError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Devsim(#[from] DevsimError),
    #[error("segmenter found no object in frame {sequence}")]
    NoObject { sequence: u32 },
    #[error("no object is active")]
    NoActiveObject,
    #[error("no profile registered for class {0}")]
    UnknownProfile(u32),
    #[error("no objects registered yet; run `acquaint` first")]
    NoProfiles,
    #[error("I/O failure: {0}")]
    Io(String),
    #[error("workspace is corrupt: {0}")]
    CorruptWorkspace(String),
}
