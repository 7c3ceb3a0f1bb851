//! Object persona engine.
//!
//! A camera-bearing scope and a touch-sensing wand let a user meet
//! everyday objects, give each one a persona, and talk to it with
//! push-to-talk. This crate holds the device protocols, the acquaintance
//! pipeline (frames, masks, dataset, detector registration, persona), the
//! bonding loop (transcription, bounded chat memory, segmented parallel
//! synthesis), pluggable model backends and a hardware-free simulator.

pub mod audio;
pub mod backends;
pub mod clock;
pub mod dialogue;
pub mod fsutil;
pub mod imaging;
pub mod persona;
pub mod protocol;
pub mod vision;
pub mod devsim;
pub mod orchestrator;
pub mod config;

#[cfg(test)]
mod testutil;
