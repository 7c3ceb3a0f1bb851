use std::thread;
use std::time::Duration;

use super::DelayFn;
use crate::audio::{decode_wav, tone};
use crate::backends::{BackendError, ChatModel, Synthesis, Synthesizer, Transcriber};
use crate::dialogue::{ChatRequest, MessageRole};
use crate::persona::{Language, VoiceId};

/// 60 ms of audio per character at 16 kHz.
pub const MOCK_SAMPLES_PER_CHAR: usize = 960;
/// Reported synthesis cost; with 60 ms of audio per char this gives RTF 0.6.
pub const MOCK_SYNTH_COMPUTE_MS_PER_CHAR: f64 = 36.0;

const TONE_AMPLITUDE: i16 = 8000;

/// Returns the text embedded in the recording's `utxt` chunk.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTranscriber;

impl Transcriber for MockTranscriber {
    fn transcribe(&self, wav: &[u8], _language: Language) -> Result<String, BackendError> {
        let decoded = decode_wav(wav).map_err(|e| BackendError::Failed(e.to_string()))?;
        decoded
            .text
            .ok_or_else(|| BackendError::Failed("recording carries no text chunk".into()))
    }
}

/// Templated echo. See [`mock_chat`].
#[derive(Debug, Clone, Default)]
pub struct MockChat {
    pub script: Option<Vec<String>>,
    pub fail_on: Option<String>,
}

impl ChatModel for MockChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        if let (Some(needle), Some(text)) = (&self.fail_on, request.last_user_text()) {
            if text.contains(needle.as_str()) {
                return Err(BackendError::Timeout);
            }
        }
        match &self.script {
            Some(sentences) => Ok(sentences
                .iter()
                .map(|s| format!("{s}{}", request.marker))
                .collect()),
            None => Ok(mock_chat(request)),
        }
    }
}

/// `"<name> hears: <text>.§"`, plus a recall sentence when the request
/// carries earlier records.
pub fn mock_chat(request: &ChatRequest) -> String {
    let name = request
        .system()
        .and_then(|m| m.name.as_deref())
        .unwrap_or("Object");
    let heard = request
        .last_user_text()
        .unwrap_or("")
        .trim()
        .trim_end_matches(['.', '!', '?', '。', '！', '？']);
    let earlier = request
        .messages
        .iter()
        .filter(|m| m.role != MessageRole::System)
        .count()
        .saturating_sub(1);
    let marker = &request.marker;
    let mut out = match request.language {
        Language::En => format!("{name} hears: {heard}.{marker}"),
        Language::Zh => format!("{name}听到：{heard}。{marker}"),
    };
    if earlier > 0 {
        out += &match request.language {
            Language::En => format!("{name} recalls {earlier} earlier messages.{marker}"),
            Language::Zh => format!("{name}记得之前的{earlier}条消息。{marker}"),
        };
    }
    out
}

/// Tone frequency (Hz) that identifies each voice.
pub fn voice_frequency(voice: VoiceId) -> f64 {
    match voice {
        VoiceId::ElderlyFemale => 220.0,
        VoiceId::YoungFemale => 262.0,
        VoiceId::ChildFemale => 294.0,
        VoiceId::ElderlyMale => 330.0,
        VoiceId::YoungMale => 392.0,
        VoiceId::ChildMale => 440.0,
        VoiceId::Neutral => 494.0,
    }
}

/// 60 ms of sine tone per character at the voice's frequency.
#[derive(Clone)]
pub struct MockSynthesizer {
    pub compute_ms_per_char: f64,
    pub delay: Option<DelayFn>,
    pub fail_on: Option<String>,
}

impl Default for MockSynthesizer {
    fn default() -> Self {
        Self {
            compute_ms_per_char: MOCK_SYNTH_COMPUTE_MS_PER_CHAR,
            delay: None,
            fail_on: None,
        }
    }
}

impl Synthesizer for MockSynthesizer {
    fn synthesize(&self, text: &str, voice: VoiceId, _language: Language) -> Result<Synthesis, BackendError> {
        if let Some(delay) = &self.delay {
            thread::sleep(Duration::from_millis(delay(text)));
        }
        if self.fail_on.as_deref().is_some_and(|n| text.contains(n)) {
            return Err(BackendError::Failed(format!("synthesis refused: {text}")));
        }
        let chars = text.chars().count();
        Ok(Synthesis {
            samples: tone(voice_frequency(voice), chars * MOCK_SAMPLES_PER_CHAR, TONE_AMPLITUDE),
            compute_ms: Some(self.compute_ms_per_char * chars as f64),
        })
    }
}
