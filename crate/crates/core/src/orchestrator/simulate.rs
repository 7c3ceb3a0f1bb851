//! Fully scripted sessions on a virtual clock.
//!
//! Output directory layout:
//!
//! ```text
//! out/
//!   transcript.txt
//!   metrics.txt             key=value timing summary
//!   events.jsonl            every session event
//!   audio/cycleNN_segNN.wav
//!   history/<class_id>.json
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::acquaint::AcquaintOptions;
use super::bonding::{CycleOutcome, CycleReport};
use super::session::{ScriptedMicrophone, Session, SessionConfig};
use super::SessionError;
use crate::backends::CapabilitySet;
use crate::clock::{Clock, VirtualClock};
use crate::devsim::{SceneRenderer, SceneScript, VirtualScope, WandScript};
use crate::dialogue::Summary;
use crate::fsutil::write_atomic;
use crate::protocol::{ControlKind, WandKind};

/// Clean frames used to acquaint each scene object before the run.
const ACQUAINT_CLIP_FRAMES: u32 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub cycles: Vec<CycleReport>,
    /// Labels of objects acquainted automatically before the run.
    pub acquainted: Vec<String>,
    pub transcript: String,
    pub metrics: String,
    pub out_dir: PathBuf,
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> SessionError + '_ {
    move |e| SessionError::Io(format!("{}: {e}", path.display()))
}

/// Plays `scene` and `wand` against a session rooted at `root`, writing
/// results under `out`. Scene objects not yet registered are acquainted
/// first from clean single-object clips.
pub fn simulate(
    scene: &SceneScript,
    wand: &WandScript,
    seed: u64,
    caps: CapabilitySet,
    root: &Path,
    out: &Path,
    mut config: SessionConfig,
) -> Result<SimulationReport, SessionError> {
    scene.validate()?;
    wand.validate()?;
    let renderer = SceneRenderer::new(scene.clone(), seed)?;
    let clock = Arc::new(VirtualClock::new());
    config.audio_dir = Some(out.join("audio"));
    let _ = fs::remove_dir_all(out.join("audio"));
    let mut session = Session::open(root, caps, clock.clone(), config.clone())?;

    let acquainted = acquaint_scene_objects(&mut session, scene, seed)?;
    let _ = session.take_events();

    let mut mic = ScriptedMicrophone::new(wand.clone());
    let timeline = wand.timeline();
    let interval = scene.frame_interval_ms();
    let (mut next_frame, mut next_event) = (0u32, 0usize);
    let mut transcript = String::new();
    let mut events = String::new();
    let mut cycle_no = 0;

    loop {
        let frame_t = (next_frame < renderer.len()).then(|| next_frame as f64 * interval);
        let event_t = timeline.get(next_event).map(|(t, _)| *t as f64);
        let (t, is_frame) = match (frame_t, event_t) {
            (None, None) => break,
            (Some(f), Some(e)) if e < f => (e, false),
            (Some(f), _) => (f, true),
            (None, Some(e)) => (e, false),
        };
        if t > clock.now_ms() {
            clock.advance_to_ms(t.floor() as u64);
        }
        if let Some(outcome) = session.on_tick(&mut mic).transpose() {
            cycle_no += 1;
            log_cycle(&mut transcript, cycle_no, clock.now_ms(), &session, outcome);
        }
        if is_frame {
            session.on_frame(&renderer.render(next_frame));
            next_frame += 1;
        } else {
            let (at_ms, msg) = timeline[next_event];
            next_event += 1;
            let result = session.on_wand(msg, &mut mic);
            if session.take_controls().iter().any(|c| c.kind == ControlKind::RecordRejected) {
                let _ = writeln!(transcript, "- t={at_ms} ms: press rejected, no object in view\n");
            }
            if msg.kind == WandKind::TouchUp {
                if let Some(outcome) = result.transpose() {
                    cycle_no += 1;
                    log_cycle(&mut transcript, cycle_no, at_ms as f64, &session, outcome);
                }
            }
        }
        for e in session.take_events() {
            events.push_str(&e.to_line());
            events.push('\n');
        }
    }

    let cycles = session.reports().to_vec();
    let metrics = metrics_report(&cycles);
    fs::create_dir_all(out).map_err(io(out))?;
    write_atomic(&out.join("transcript.txt"), transcript.as_bytes()).map_err(io(out))?;
    write_atomic(&out.join("metrics.txt"), metrics.as_bytes()).map_err(io(out))?;
    write_atomic(&out.join("events.jsonl"), events.as_bytes()).map_err(io(out))?;
    let history_out = out.join("history");
    for class_id in session.registry().profiles.keys() {
        let src = session.workspace().histories.path_for(*class_id);
        if src.exists() {
            let bytes = fs::read(&src).map_err(io(&src))?;
            write_atomic(&history_out.join(format!("{class_id}.json")), &bytes).map_err(io(&history_out))?;
        }
    }
    Ok(SimulationReport {
        cycles,
        acquainted,
        transcript,
        metrics,
        out_dir: out.to_path_buf(),
    })
}

/// Acquaints every sprite in `scene` whose label is not registered yet,
/// each from a clean single-object clip. Returns the new labels.
pub fn acquaint_scene_objects(
    session: &mut Session,
    scene: &SceneScript,
    seed: u64,
) -> Result<Vec<String>, SessionError> {
    let mut acquainted = vec![];
    for sprite in scene.sprite_ids() {
        if session.registry().by_label(&sprite).is_some() {
            continue;
        }
        let clip = SceneScript::single(&sprite, ACQUAINT_CLIP_FRAMES, seed);
        let mut source = VirtualScope::new(SceneRenderer::new(clip, seed)?);
        let options = AcquaintOptions::new(session.config().language, seed).label(sprite.clone());
        session.acquaint(&mut source, &options)?;
        acquainted.push(sprite);
    }
    Ok(acquainted)
}

fn log_cycle(
    out: &mut String,
    n: usize,
    at_ms: f64,
    session: &Session,
    outcome: Result<CycleOutcome, SessionError>,
) {
    let _ = match outcome {
        Ok(CycleOutcome::Completed(r)) => {
            let label = session.registry().get(r.class_id).map_or("?", |p| p.label.as_str());
            writeln!(
                out,
                "# cycle {n} | t={at_ms:.0} ms | object {} ({label})\nUSER: {}\n{}: {}\n",
                r.class_id,
                r.transcript,
                r.object_name,
                r.segments.join(" ")
            )
        }
        Ok(CycleOutcome::Skipped) => writeln!(out, "# cycle {n} | t={at_ms:.0} ms | nothing heard\n"),
        Err(e) => writeln!(out, "# cycle {n} | t={at_ms:.0} ms | failed: {e}\n"),
    };
}

/// Timing summary: input duration, per-segment synthesis time and
/// real-time factor, as mean and sample standard deviation.
pub fn metrics_report(cycles: &[CycleReport]) -> String {
    let inputs: Vec<f64> = cycles.iter().map(|c| c.input_ms).collect();
    let synth: Vec<f64> = cycles.iter().flat_map(|c| c.synth_ms.iter().copied()).collect();
    let rtf: Vec<f64> = cycles.iter().flat_map(|c| c.rtf.iter().copied()).collect();
    let audio: f64 = cycles.iter().flat_map(|c| c.audio_ms.iter()).sum();
    let total_rtf = if audio > 0.0 { synth.iter().sum::<f64>() / audio } else { 0.0 };
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("cycles", cycles.len().to_string());
    kv("segments", synth.len().to_string());
    for (name, values) in [("input_duration_ms", &inputs), ("synth_ms", &synth), ("rtf", &rtf)] {
        let sum = Summary::of(values);
        kv(&format!("{name}_mean"), format!("{:.6}", sum.mean));
        kv(&format!("{name}_sd"), format!("{:.6}", sum.sd));
    }
    kv("rtf_total", format!("{total_rtf:.6}"));
    for (i, c) in cycles.iter().enumerate() {
        kv(&format!("cycle{}_input_ms", i + 1), format!("{:.6}", c.input_ms));
        kv(&format!("cycle{}_segments", i + 1), c.segments.len().to_string());
        kv(&format!("cycle{}_rtf", i + 1), format!("{:.6}", c.total_rtf));
    }
    s
}
