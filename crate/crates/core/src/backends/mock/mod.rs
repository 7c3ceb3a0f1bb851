//! Deterministic stand-ins for every capability.
//!
//! Each mock is a pure function of its inputs and options, so two runs with
//! the same configuration produce byte-identical outputs.

mod persona;
mod speech;
mod vision;

use std::fmt;
use std::sync::Arc;

pub use persona::{dominant_hue_bucket, MockPersonaGenerator};
pub use speech::{
    mock_chat, voice_frequency, MockChat, MockSynthesizer, MockTranscriber, MOCK_SAMPLES_PER_CHAR,
    MOCK_SYNTH_COMPUTE_MS_PER_CHAR,
};
pub use vision::{
    chroma, mock_detector_match, MockDetector, MockSegmenter, MockTrainer, SALIENT_CHROMA,
};

use super::CapabilitySet;

/// Per-segment delay hook for the mock synthesizer, in real milliseconds.
pub type DelayFn = Arc<dyn Fn(&str) -> u64 + Send + Sync>;

#[derive(Clone)]
pub struct MockOptions {
    /// Modelled synthesis cost reported back as compute time.
    pub synth_compute_ms_per_char: f64,
    /// Real sleep before each synthesis call; used to shuffle completion order.
    pub synth_delay: Option<DelayFn>,
    /// Synthesis fails for any segment containing this text.
    pub synth_fail_on: Option<String>,
    /// Fixed sentences replacing the echo template.
    pub chat_script: Option<Vec<String>>,
    /// Chat fails for any user text containing this text.
    pub chat_fail_on: Option<String>,
    /// Segmenter fails on the frame with this sequence number.
    pub segment_fail_on: Option<u32>,
}

impl Default for MockOptions {
    fn default() -> Self {
        Self {
            synth_compute_ms_per_char: MOCK_SYNTH_COMPUTE_MS_PER_CHAR,
            synth_delay: None,
            synth_fail_on: None,
            chat_script: None,
            chat_fail_on: None,
            segment_fail_on: None,
        }
    }
}

impl fmt::Debug for MockOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MockOptions")
            .field("synth_compute_ms_per_char", &self.synth_compute_ms_per_char)
            .field("synth_delay", &self.synth_delay.is_some())
            .field("synth_fail_on", &self.synth_fail_on)
            .field("chat_script", &self.chat_script)
            .field("chat_fail_on", &self.chat_fail_on)
            .field("segment_fail_on", &self.segment_fail_on)
            .finish()
    }
}

impl MockOptions {
    pub fn build(self) -> CapabilitySet {
        CapabilitySet {
            segmenter: Arc::new(MockSegmenter {
                fail_on: self.segment_fail_on,
            }),
            trainer: Arc::new(MockTrainer),
            detector: Arc::new(MockDetector),
            persona_generator: Arc::new(MockPersonaGenerator),
            transcriber: Arc::new(MockTranscriber),
            chat: Arc::new(MockChat {
                script: self.chat_script,
                fail_on: self.chat_fail_on,
            }),
            synthesizer: Arc::new(MockSynthesizer {
                compute_ms_per_char: self.synth_compute_ms_per_char,
                delay: self.synth_delay,
                fail_on: self.synth_fail_on,
            }),
        }
    }
}
