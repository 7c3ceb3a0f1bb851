//! The single session loop state: everything a live or simulated run needs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::acquaint::{acquaint, AcquaintOptions, Acquaintance};
use super::api::{EventKind, SessionEvent};
use super::bonding::{run_bonding_cycle, BondingParams, CycleOutcome, CycleReport, CycleStage};
use super::state::{handle_wand, SessionState, Tracker, WandEffect, DEFAULT_GRACE_MS, MAX_RECORDING_MS};
use super::workspace::{ObjectRegistry, Workspace};
use super::SessionError;
use crate::audio::encode_wav;
use crate::backends::CapabilitySet;
use crate::clock::SharedClock;
use crate::devsim::{record_utterance, WandScript};
use crate::dialogue::RecordingSink;
use crate::fsutil::write_atomic;
use crate::persona::{edit_persona, Language, Persona};
use crate::protocol::{ControlKind, ControlMessage, FrameSource, ScopeFrame, WandKind, WandMessage};
use crate::vision::{detect_timed, ModelHandle, DEFAULT_CONFIDENCE_THRESHOLD};

/// Supplies the audio recorded while the wand was held.
pub trait Microphone: Send {
    fn capture(&mut self, class_id: u32, start_ms: f64, end_ms: f64) -> Result<Vec<u8>, SessionError>;
}

/// Replays the `say` text of the matching scripted press.
#[derive(Debug, Clone)]
pub struct ScriptedMicrophone {
    script: WandScript,
}

impl ScriptedMicrophone {
    pub fn new(script: WandScript) -> Self {
        Self { script }
    }
}

impl Microphone for ScriptedMicrophone {
    fn capture(&mut self, _class_id: u32, start_ms: f64, end_ms: f64) -> Result<Vec<u8>, SessionError> {
        let text = self.script.utterance_at(start_ms.round() as u64).unwrap_or("");
        Ok(record_utterance(text, (end_ms - start_ms).round().max(0.0) as u64))
    }
}

/// Typed input standing in for speech.
#[derive(Debug, Clone, Default)]
pub struct TypedMicrophone {
    pending: Option<String>,
}

/// Recording length given to typed input shorter than a real hold.
const TYPED_MS_PER_CHAR: u64 = 80;

impl TypedMicrophone {
    pub fn say(&mut self, text: impl Into<String>) {
        self.pending = Some(text.into());
    }
}

impl Microphone for TypedMicrophone {
    fn capture(&mut self, _class_id: u32, start_ms: f64, end_ms: f64) -> Result<Vec<u8>, SessionError> {
        let text = self.pending.take().unwrap_or_default();
        let typed = TYPED_MS_PER_CHAR * text.chars().count().max(1) as u64;
        let held = (end_ms - start_ms).round().max(0.0) as u64;
        Ok(record_utterance(&text, held.max(typed)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub confidence_threshold: f64,
    pub grace_ms: u64,
    pub bonding: BondingParams,
    pub language: Language,
    pub seed: u64,
    /// Where reply clips are written as `cycleNN_segNN.wav`.
    pub audio_dir: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            grace_ms: DEFAULT_GRACE_MS,
            bonding: BondingParams::default(),
            language: Language::En,
            seed: 0,
            audio_dir: None,
        }
    }
}

pub struct Session {
    workspace: Workspace,
    registry: ObjectRegistry,
    model: Option<ModelHandle>,
    caps: CapabilitySet,
    clock: SharedClock,
    config: SessionConfig,
    state: SessionState,
    tracker: Tracker,
    /// Class and start time of the recording in progress.
    recording: Option<(u32, f64, u16)>,
    cycles: usize,
    reports: Vec<CycleReport>,
    events: Vec<SessionEvent>,
    next_event_seq: u64,
    controls: Vec<ControlMessage>,
    typed_seq: u16,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("root", &self.workspace.root())
            .field("state", &self.state)
            .field("objects", &self.registry.len())
            .finish_non_exhaustive()
    }
}

impl Session {
    /// Opens (or creates) the workspace at `root` and loads its objects.
    pub fn open(
        root: impl AsRef<Path>,
        caps: CapabilitySet,
        clock: SharedClock,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        let workspace = Workspace::open(root)?;
        let registry = workspace.load_registry()?;
        let model = workspace.load_model()?;
        if let Some(m) = &model {
            if m.class_count() < registry.len() {
                return Err(SessionError::CorruptWorkspace(format!(
                    "model covers {} classes but {} objects are registered",
                    m.class_count(),
                    registry.len()
                )));
            }
        }
        for profile in registry.profiles.values() {
            if !workspace.personas.contains(profile.class_id) {
                return Err(SessionError::CorruptWorkspace(format!(
                    "persona for class {} is missing",
                    profile.class_id
                )));
            }
        }
        Ok(Self {
            tracker: Tracker::new(config.grace_ms),
            workspace,
            registry,
            model,
            caps,
            clock,
            config,
            state: SessionState::Idle,
            recording: None,
            cycles: 0,
            reports: vec![],
            events: vec![],
            next_event_seq: 0,
            controls: vec![],
            typed_seq: 0,
        })
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn registry(&self) -> &ObjectRegistry {
        &self.registry
    }

    pub fn model(&self) -> Option<&ModelHandle> {
        self.model.as_ref()
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    pub fn capabilities(&self) -> &CapabilitySet {
        &self.caps
    }

    /// Completed bonding cycles, oldest first.
    pub fn reports(&self) -> &[CycleReport] {
        &self.reports
    }

    /// Events emitted since the last call.
    pub fn take_events(&mut self) -> Vec<SessionEvent> {
        std::mem::take(&mut self.events)
    }

    /// Control messages for the wand emitted since the last call.
    pub fn take_controls(&mut self) -> Vec<ControlMessage> {
        std::mem::take(&mut self.controls)
    }

    fn emit(&mut self, kind: EventKind, payload: Value) {
        self.events.push(SessionEvent {
            kind,
            payload,
            seq: self.next_event_seq,
        });
        self.next_event_seq += 1;
    }

    fn emit_state(&mut self, extra: Option<(&str, Value)>) {
        let mut payload = json!({
            "state": self.state.name(),
            "at_ms": self.clock.now_ms(),
        });
        let class = match self.state {
            SessionState::Tracking(c) | SessionState::Recording(c) => Some(c),
            _ => self.registry.active,
        };
        if let Some(c) = class {
            payload["class_id"] = json!(c);
            if let Some(p) = self.registry.get(c) {
                payload["label"] = json!(p.label);
            }
        }
        if let Some((key, value)) = extra {
            payload[key] = value;
        }
        self.emit(EventKind::State, payload);
    }

    fn set_state(&mut self, next: SessionState) {
        if next != self.state {
            self.state = next;
            self.emit_state(None);
        }
    }

    /// Meets a new object; see [`acquaint`].
    pub fn acquaint(
        &mut self,
        source: &mut dyn FrameSource,
        options: &AcquaintOptions,
    ) -> Result<Acquaintance, SessionError> {
        acquaint(
            source,
            &self.caps,
            &self.workspace,
            &mut self.registry,
            &mut self.model,
            options,
            self.clock.as_ref(),
        )
    }

    /// Makes `class_id` the active object without a sighting, as when the
    /// user names the object to talk to.
    pub fn force_active(&mut self, class_id: u32) -> Result<Persona, SessionError> {
        let persona = self.activate(class_id)?;
        self.set_state(SessionState::Tracking(class_id));
        Ok(persona)
    }

    fn activate(&mut self, class_id: u32) -> Result<Persona, SessionError> {
        let persona = self.workspace.persona(class_id)?;
        self.workspace.histories.load(class_id)?;
        self.registry.set_active(Some(class_id))?;
        Ok(persona)
    }

    /// Runs detection on a scope frame and updates tracking.
    pub fn on_frame(&mut self, frame: &ScopeFrame) {
        let Some(model) = &self.model else {
            return;
        };
        let now = self.clock.now_ms();
        let pass = detect_timed(
            frame,
            model,
            self.config.confidence_threshold,
            self.caps.detector.as_ref(),
            self.clock.as_ref(),
        );
        let registry = &self.registry;
        let detections = match pass {
            Ok(pass) => {
                let items: Vec<Value> = pass
                    .detections
                    .iter()
                    .map(|d| {
                        json!({
                            "class_id": d.class_id,
                            "label": registry.get(d.class_id).map(|p| p.label.as_str()),
                            "confidence": d.confidence,
                            "bbox": [d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h],
                        })
                    })
                    .collect();
                let payload = json!({
                    "sequence": frame.sequence,
                    "latency_ms": pass.latency_ms,
                    "detections": items,
                });
                self.emit(EventKind::Detection, payload);
                pass.detections
            }
            Err(e) => {
                log::warn!("detection failed on frame {}: {e}", frame.sequence);
                if !self.state.is_busy() {
                    self.set_state(SessionState::Idle);
                }
                return;
            }
        };
        let registry = &self.registry;
        let out = self
            .tracker
            .handle_frame(self.state, &detections, now, |c| registry.contains(c));
        if let Some(c) = out.switched_to {
            if let Err(e) = self.activate(c) {
                log::warn!("cannot load profile {c}: {e}");
                self.set_state(SessionState::Idle);
                return;
            }
        }
        self.set_state(out.state);
    }

    /// Handles a wand message, running a bonding cycle on release.
    pub fn on_wand(
        &mut self,
        msg: WandMessage,
        mic: &mut dyn Microphone,
    ) -> Result<Option<CycleOutcome>, SessionError> {
        let out = handle_wand(self.state, msg);
        for kind in &out.controls {
            self.send_control(*kind, msg.sequence);
        }
        match out.effect {
            WandEffect::None => {
                self.set_state(out.state);
                Ok(None)
            }
            WandEffect::StartRecording(c) => {
                self.recording = Some((c, self.clock.now_ms(), msg.sequence));
                self.set_state(out.state);
                Ok(None)
            }
            WandEffect::StopRecording(c) => {
                self.set_state(out.state);
                self.finish_recording(c, mic).map(Some)
            }
        }
    }

    /// Ends a recording that has run for the maximum length.
    pub fn on_tick(&mut self, mic: &mut dyn Microphone) -> Result<Option<CycleOutcome>, SessionError> {
        let Some((c, start, seq)) = self.recording else {
            return Ok(None);
        };
        if self.clock.now_ms() - start < MAX_RECORDING_MS as f64 {
            return Ok(None);
        }
        self.send_control(ControlKind::VibrateOff, seq);
        self.set_state(SessionState::Transcribing);
        self.finish_recording(c, mic).map(Some)
    }

    fn send_control(&mut self, kind: ControlKind, sequence: u16) {
        let msg = ControlMessage { kind, sequence };
        self.controls.push(msg);
        self.emit(EventKind::Control, json!({ "kind": kind, "sequence": sequence }));
    }

    fn finish_recording(&mut self, class_id: u32, mic: &mut dyn Microphone) -> Result<CycleOutcome, SessionError> {
        let (_, start, _) = self.recording.take().unwrap_or((class_id, self.clock.now_ms(), 0));
        let end = self.clock.now_ms().min(start + MAX_RECORDING_MS as f64);
        let result = mic
            .capture(class_id, start, end)
            .and_then(|wav| self.run_cycle(class_id, &wav));
        let next = self.tracker.after_speaking(class_id, self.clock.now_ms());
        match &result {
            Ok(_) => self.set_state(next),
            Err(e) => {
                self.state = next;
                self.emit_state(Some(("error", json!(e.to_string()))));
            }
        }
        result
    }

    /// Runs a cycle on already-recorded audio for `class_id`.
    pub fn run_cycle(&mut self, class_id: u32, wav: &[u8]) -> Result<CycleOutcome, SessionError> {
        if !self.registry.contains(class_id) {
            return Err(SessionError::UnknownProfile(class_id));
        }
        let persona = self.workspace.persona(class_id)?;
        let mut staged: Vec<(EventKind, Value, Option<SessionState>)> = vec![];
        let mut sink = RecordingSink::default();
        let name = persona.name.clone();
        let outcome = run_bonding_cycle(
            wav,
            class_id,
            &persona,
            &self.workspace,
            &self.caps,
            &self.config.bonding,
            self.clock.as_ref(),
            &mut sink,
            &mut |stage| match stage {
                CycleStage::Transcribed(text) => staged.push((
                    EventKind::Transcript,
                    json!({ "class_id": class_id, "role": "USER", "speaker": "user", "text": text }),
                    Some(SessionState::Generating),
                )),
                CycleStage::Replied(reply) => staged.push((
                    EventKind::Transcript,
                    json!({ "class_id": class_id, "role": "OBJECT", "speaker": name, "text": reply.joined() }),
                    Some(SessionState::Speaking),
                )),
            },
        );
        for (kind, payload, next) in staged {
            self.emit(kind, payload);
            if let Some(s) = next {
                self.set_state(s);
            }
        }
        let outcome = outcome?;
        if let CycleOutcome::Completed(report) = &outcome {
            self.cycles += 1;
            for clip in &sink.played {
                let file = format!("cycle{:02}_seg{:02}.wav", self.cycles, clip.segment_index);
                let path = match &self.config.audio_dir {
                    Some(dir) => {
                        let path = dir.join(&file);
                        write_atomic(&path, &encode_wav(&clip.samples, None))
                            .map_err(|e| SessionError::Io(format!("{}: {e}", path.display())))?;
                        Some(file)
                    }
                    None => None,
                };
                self.emit(
                    EventKind::AudioSegment,
                    json!({
                        "class_id": class_id,
                        "cycle": self.cycles,
                        "segment": clip.segment_index,
                        "text": report.segments[clip.segment_index],
                        "duration_ms": clip.duration_ms(),
                        "synth_ms": clip.synth_ms,
                        "path": path,
                    }),
                );
            }
            self.reports.push((**report).clone());
        }
        Ok(outcome)
    }

    /// Applies field overrides to a stored persona.
    pub fn edit_persona(
        &mut self,
        class_id: u32,
        overrides: &BTreeMap<String, String>,
    ) -> Result<Persona, SessionError> {
        let result = (|| {
            if !self.registry.contains(class_id) {
                return Err(SessionError::UnknownProfile(class_id));
            }
            let edited = edit_persona(&self.workspace.persona(class_id)?, overrides)?;
            self.workspace.personas.store(class_id, &edited)?;
            Ok(edited)
        })();
        match &result {
            Ok(p) => self.emit_state(Some(("persona", json!({ "class_id": class_id, "persona": p })))),
            Err(e) => self.emit_state(Some(("error", json!(e.to_string())))),
        }
        result
    }

    /// Convenience for typed conversation: a full press, say, release.
    pub fn say(&mut self, text: &str, mic: &mut TypedMicrophone) -> Result<Option<CycleOutcome>, SessionError> {
        let seq = self.typed_seq;
        self.typed_seq = seq.wrapping_add(2);
        self.on_wand(WandMessage::new(WandKind::TouchDown, seq), mic)?;
        if !matches!(self.state, SessionState::Recording(_)) {
            return Err(SessionError::NoActiveObject);
        }
        mic.say(text);
        self.on_wand(WandMessage::new(WandKind::TouchUp, seq.wrapping_add(1)), mic)
    }
}
