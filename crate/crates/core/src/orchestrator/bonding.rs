//! One push-to-talk exchange with the active object.

use serde::Serialize;

use super::workspace::Workspace;
use super::SessionError;
use crate::audio::decode_wav;
use crate::backends::{BackendError, CapabilitySet};
use crate::clock::Clock;
use crate::dialogue::metrics::rtf_from;
use crate::dialogue::synth::DEFAULT_PARALLELISM;
use crate::dialogue::{
    build_chat_request, segment_response, synthesize_ordered, transcribe, ChatParams, ChatRecord,
    DialogueError, PlaybackSink, SegmentedResponse, SynthesisRun,
};
use crate::persona::Persona;

#[derive(Debug, Clone, PartialEq)]
pub struct BondingParams {
    pub chat: ChatParams,
    pub parallelism: usize,
}

impl Default for BondingParams {
    fn default() -> Self {
        Self {
            chat: ChatParams::default(),
            parallelism: DEFAULT_PARALLELISM,
        }
    }
}

/// Progress notifications while a cycle runs.
#[derive(Debug, Clone, PartialEq)]
pub enum CycleStage<'a> {
    Transcribed(&'a str),
    Replied(&'a SegmentedResponse),
}

/// Timing and content of a finished cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub class_id: u32,
    pub object_name: String,
    pub transcript: String,
    pub segments: Vec<String>,
    /// Length of the user's recording.
    pub input_ms: f64,
    /// Synthesis time per segment, in segment order; failed segments are absent.
    pub synth_ms: Vec<f64>,
    pub audio_ms: Vec<f64>,
    pub rtf: Vec<f64>,
    /// Total synthesis time over total audio duration.
    pub total_rtf: f64,
    #[serde(skip)]
    pub run: SynthesisRun,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CycleOutcome {
    /// Nothing intelligible was said; history is untouched.
    Skipped,
    Completed(Box<CycleReport>),
}

/// Transcribes `wav`, asks the object for a reply, persists both records,
/// then synthesizes and plays the reply in segment order.
///
/// History is written only once the reply is in hand, so any failure
/// before that leaves the object's history file byte-identical.
#[allow(clippy::too_many_arguments)]
pub fn run_bonding_cycle(
    wav: &[u8],
    class_id: u32,
    persona: &Persona,
    workspace: &Workspace,
    caps: &CapabilitySet,
    params: &BondingParams,
    clock: &dyn Clock,
    sink: &mut dyn PlaybackSink,
    observer: &mut dyn FnMut(CycleStage<'_>),
) -> Result<CycleOutcome, SessionError> {
    let input_ms = decode_wav(wav).map_err(DialogueError::from)?.duration_ms();
    let transcript = match transcribe(wav, caps.transcriber.as_ref(), persona.language) {
        Ok(t) => t,
        Err(DialogueError::EmptyTranscript | DialogueError::EmptyAudio) => return Ok(CycleOutcome::Skipped),
        Err(e) => return Err(e.into()),
    };
    observer(CycleStage::Transcribed(&transcript));

    let mut history = workspace.histories.load(class_id)?;
    let request = build_chat_request(persona, &history, &transcript, &params.chat);
    let reply = caps.chat.complete(&request)?;
    let segmented = segment_response(&reply, &params.chat.marker);
    if segmented.is_empty() {
        return Err(BackendError::Schema("chat reply is empty".into()).into());
    }

    let now = clock.now_ms().max(0.0) as u64;
    history.append_with_eviction(ChatRecord::user(transcript.clone(), now))?;
    history.append_with_eviction(ChatRecord::object(segmented.joined(), now))?;
    workspace.histories.save(class_id, &history)?;
    observer(CycleStage::Replied(&segmented));

    let run = synthesize_ordered(
        &segmented.segments,
        persona.voice,
        persona.language,
        caps.synthesizer.as_ref(),
        params.parallelism,
        clock,
        sink,
    )?;
    let synth_ms: Vec<f64> = run.clips.iter().map(|c| c.synth_ms).collect();
    let audio_ms: Vec<f64> = run.clips.iter().map(|c| c.duration_ms()).collect();
    let rtf = synth_ms.iter().zip(&audio_ms).map(|(s, d)| rtf_from(*s, *d)).collect();
    let total_rtf = rtf_from(synth_ms.iter().sum(), audio_ms.iter().sum());
    Ok(CycleOutcome::Completed(Box::new(CycleReport {
        class_id,
        object_name: persona.name.clone(),
        transcript,
        segments: segmented.segments,
        input_ms,
        synth_ms,
        audio_ms,
        rtf,
        total_rtf,
        run,
    })))
}
