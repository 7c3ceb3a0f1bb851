//! Bonding-cycle machinery: chat memory, request assembly, reply
//! segmentation, ordered synthesis, transcription and timing metrics.

pub mod history;
pub mod metrics;
pub mod request;
pub mod segment;
pub mod synth;

use thiserror::Error;

pub use history::{ChatHistory, ChatRecord, HistoryStore, Role, HISTORY_CAPACITY};
pub use metrics::{rtf, Summary};
pub use request::{build_chat_request, ChatMessage, ChatParams, ChatRequest, MessageRole};
pub use segment::{normalize_whitespace, segment_response, SegmentedResponse};
pub use synth::{synthesize_ordered, AudioClip, PlaybackSink, RecordingSink, SynthesisRun};

use crate::audio::{decode_wav, WavError};
use crate::backends::{BackendError, Transcriber};
use crate::persona::Language;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DialogueError {
    #[error("chat record text is empty")]
    EmptyRecord,
    #[error("expected a {expected:?} record, got {got:?}")]
    OutOfTurn { expected: Role, got: Role },
    #[error("history document is corrupt: {0}")]
    CorruptHistory(String),
    #[error("history I/O failure: {0}")]
    Io(String),
    #[error("recorded audio is empty")]
    EmptyAudio,
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("invalid recording: {0}")]
    BadAudio(#[from] WavError),
    #[error("parallelism must be at least 1")]
    InvalidParallelism,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Speech-to-text over a recorded WAV. Whitespace-only transcripts are
/// reported as [`DialogueError::EmptyTranscript`].
pub fn transcribe(
    wav: &[u8],
    backend: &dyn Transcriber,
    language: Language,
) -> Result<String, DialogueError> {
    let decoded = decode_wav(wav)?;
    if decoded.samples.is_empty() {
        return Err(DialogueError::EmptyAudio);
    }
    let text = backend.transcribe(wav, language)?;
    let text = text.trim();
    if text.is_empty() {
        return Err(DialogueError::EmptyTranscript);
    }
    Ok(text.to_string())
}
