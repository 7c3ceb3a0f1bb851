use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use talkspell::backends::{BackendError, CapabilitySet, PersonaGenerator, TrainJob, TrainedModel, Trainer};
use talkspell::clock::{SystemClock, VirtualClock};
use talkspell::devsim::{SceneRenderer, SceneScript, VirtualScope};
use talkspell::orchestrator::{
    acquaint_scene_objects, AcquaintOptions, ApiServer, Session, SessionConfig, SessionError, SessionState,
    TypedMicrophone,
};
use talkspell::persona::{Language, PersonaRequest};
use talkspell::protocol::{ControlKind, WandKind, WandMessage};
use talkspell::vision::evaluate_stream;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn clip(sprite: &str) -> VirtualScope {
    VirtualScope::new(SceneRenderer::new(SceneScript::single(sprite, 100, 7), 7).unwrap())
}

fn options(label: &str) -> AcquaintOptions {
    AcquaintOptions::new(Language::En, 7).label(label)
}

struct BrokenTrainer;

impl Trainer for BrokenTrainer {
    fn train(&self, _job: &TrainJob<'_>) -> Result<TrainedModel, BackendError> {
        Err(BackendError::Failed("GPU on fire".into()))
    }
}

struct GarbledPersonas;

impl PersonaGenerator for GarbledPersonas {
    fn generate(&self, _request: &PersonaRequest) -> Result<String, BackendError> {
        Ok(r#"{"name": "Blob", "voice": "ROBOT"}"#.into())
    }
}

#[test]
fn failed_acquaintance_leaves_workspace_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(VirtualClock::new());
    {
        let mut session = Session::open(dir.path(), CapabilitySet::mock(), clock.clone(), SessionConfig::default()).unwrap();
        session.acquaint(&mut clip("mug"), &options("mug")).unwrap();
    }
    let before = tree_bytes(dir.path());

    let mut no_trainer = CapabilitySet::mock();
    no_trainer.trainer = Arc::new(BrokenTrainer);
    let mut no_persona = CapabilitySet::mock();
    no_persona.persona_generator = Arc::new(GarbledPersonas);

    for caps in [no_trainer, no_persona] {
        let mut session = Session::open(dir.path(), caps, clock.clone(), SessionConfig::default()).unwrap();
        let err = session.acquaint(&mut clip("pumpkin"), &options("pumpkin")).unwrap_err();
        assert!(matches!(err, SessionError::Vision(_) | SessionError::Persona(_)), "{err}");
        assert_eq!(session.registry().len(), 1);
        assert_eq!(session.model().unwrap().class_names, ["mug"]);
        assert_eq!(tree_bytes(dir.path()), before);
    }

    let mut session = Session::open(dir.path(), CapabilitySet::mock(), clock, SessionConfig::default()).unwrap();
    let done = session.acquaint(&mut clip("pumpkin"), &options("pumpkin")).unwrap();
    assert_eq!(done.profile.class_id, 1);
    assert_eq!(session.model().unwrap().class_names, ["mug", "pumpkin"]);
}

#[test]
fn labels_are_unique() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(VirtualClock::new());
    let mut session = Session::open(dir.path(), CapabilitySet::mock(), clock, SessionConfig::default()).unwrap();
    session.acquaint(&mut clip("mug"), &options("mug")).unwrap();
    let before = tree_bytes(dir.path());
    assert!(session.acquaint(&mut clip("pumpkin"), &options("mug")).is_err());
    assert_eq!(tree_bytes(dir.path()), before);
}

/// The wand vibrates exactly while the session is recording, whatever the
/// order of frames, presses, releases and clock ticks.
#[test]
fn vibration_iff_recording() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(VirtualClock::new());
    let mut session = Session::open(dir.path(), CapabilitySet::mock(), clock.clone(), SessionConfig::default()).unwrap();
    session.acquaint(&mut clip("mug"), &options("mug")).unwrap();
    let _ = session.take_controls();

    let mug = SceneRenderer::new(SceneScript::load(&fixture("scenes/mug.json")).unwrap(), 7).unwrap();
    let empty = SceneRenderer::new(SceneScript::from_json(r#"{"duration_frames": 1, "background": {"seed": 3}}"#).unwrap(), 7)
        .unwrap();
    let mut mic = TypedMicrophone::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut vibrating, mut seq, mut recordings) = (false, 0u16, 0);
    for step in 0..400 {
        let mut sent: Option<u16> = None;
        match rng.gen_range(0..10) {
            0..=3 => session.on_frame(&mug.render(rng.gen_range(0..mug.len()))),
            4 => session.on_frame(&empty.render(0)),
            5 | 6 => {
                mic.say("are you there");
                sent = Some(seq);
                let _ = session.on_wand(WandMessage::new(WandKind::TouchDown, seq), &mut mic);
            }
            7 | 8 => {
                sent = Some(seq);
                let _ = session.on_wand(WandMessage::new(WandKind::TouchUp, seq), &mut mic);
            }
            _ => {
                clock.advance_ms(rng.gen_range(0..12_000));
                let _ = session.on_tick(&mut mic);
            }
        }
        seq = seq.wrapping_add(1);
        clock.advance_ms(50);
        for c in session.take_controls() {
            if let Some(s) = sent {
                assert_eq!(c.sequence, s, "control does not echo the triggering message");
            }
            match c.kind {
                ControlKind::RecordStarted => {
                    vibrating = true;
                    recordings += 1;
                }
                ControlKind::VibrateOff => vibrating = false,
                ControlKind::RecordRejected => assert!(!vibrating),
            }
        }
        assert_eq!(
            vibrating,
            matches!(session.state(), SessionState::Recording(_)),
            "step {step}: state {:?}",
            session.state()
        );
    }
    assert!(recordings > 10, "only {recordings} recordings exercised");
}

fn occluded_scene(fraction: f64) -> SceneScript {
    SceneScript::from_json(
        &json!({
            "duration_frames": 60,
            "background": { "seed": 5 },
            "placements": [{
                "sprite": "mug",
                "frames": [0, 59],
                "path": [{ "frame": 0, "x": 120, "y": 130 }, { "frame": 59, "x": 150, "y": 140 }],
                "jitter": 3,
                "occlusion": [{ "frames": [0, 59], "fraction": fraction }]
            }]
        })
        .to_string(),
    )
    .unwrap()
}

#[test]
fn detection_degrades_monotonically_with_occlusion() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(VirtualClock::new());
    let mut session = Session::open(dir.path(), CapabilitySet::mock(), clock.clone(), SessionConfig::default()).unwrap();
    acquaint_scene_objects(&mut session, &occluded_scene(0.0), 7).unwrap();
    let mut previous: Option<(f64, f64)> = None;
    for fraction in [0.0, 0.3, 0.6, 0.85, 1.0] {
        let mut scope = VirtualScope::new(SceneRenderer::new(occluded_scene(fraction), 7).unwrap());
        let report = evaluate_stream(
            &mut scope,
            session.model().unwrap(),
            0,
            60,
            session.config().confidence_threshold,
            session.capabilities().detector.as_ref(),
            clock.as_ref(),
        )
        .unwrap();
        let now = (report.accuracy, report.confidence.mean);
        if fraction == 0.0 {
            assert_eq!(report.accuracy, 1.0);
        }
        if let Some(prev) = previous {
            assert!(now.0 <= prev.0, "accuracy rose to {} at occlusion {fraction}", now.0);
        }
        previous = Some(now);
    }
    assert_eq!(previous.unwrap().0, 0.0, "a fully covered mug is still detected");
}

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    seq: u64,
}

impl Client {
    fn connect(addr: std::net::SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        Self {
            reader: BufReader::new(stream.try_clone().unwrap()),
            writer: stream,
            seq: 0,
        }
    }

    fn next(&mut self) -> Value {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        let event: Value = serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line:?}"));
        assert_eq!(event["seq"], json!(self.seq), "event sequence gap");
        self.seq += 1;
        event
    }

    fn until(&mut self, pred: impl Fn(&Value) -> bool) -> Value {
        let deadline = Instant::now() + Duration::from_secs(20);
        while Instant::now() < deadline {
            let e = self.next();
            if pred(&e) {
                return e;
            }
        }
        panic!("expected event never arrived");
    }

    fn send(&mut self, cmd: Value) {
        writeln!(self.writer, "{cmd}").unwrap();
    }
}

#[test]
fn api_server_runs_a_cycle_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let audio = dir.path().join("audio");
    let config = SessionConfig {
        audio_dir: Some(audio.clone()),
        ..SessionConfig::default()
    };
    let mut session = Session::open(dir.path(), CapabilitySet::mock(), SystemClock::shared(), config).unwrap();
    session.acquaint(&mut clip("mug"), &options("mug")).unwrap();
    let frames = Box::new(VirtualScope::new(
        SceneRenderer::new(SceneScript::load(&fixture("scenes/mug.json")).unwrap(), 7).unwrap(),
    ));
    let server = ApiServer::spawn(session, "127.0.0.1:0", Some(frames), Duration::from_millis(20)).unwrap();
    let mut client = Client::connect(server.local_addr());

    let hello = client.next();
    assert_eq!(hello["type"], "STATE");
    if hello["payload"]["state"] != "TRACKING" {
        client.until(|e| e["type"] == "STATE" && e["payload"]["state"] == "TRACKING");
    }

    client.send(json!({ "type": "PERSONA_EDIT", "seq": 1, "payload": { "class_id": 0, "set": { "voice": "ROBOT" } } }));
    let ack = client.until(|e| e["type"] == "STATE" && e["payload"]["ack"] == 1);
    assert!(ack["payload"]["error"].as_str().unwrap().contains("ROBOT"));

    client.send(json!({ "type": "SAY", "seq": 2, "payload": { "text": "hello there" } }));
    client.send(json!({ "type": "WAND", "seq": 3, "payload": { "kind": "TOUCH_DOWN" } }));
    let started = client.until(|e| e["type"] == "CONTROL");
    assert_eq!(started["payload"]["kind"], "RECORD_STARTED");
    std::thread::sleep(Duration::from_millis(300));
    client.send(json!({ "type": "WAND", "seq": 4, "payload": { "kind": "TOUCH_UP" } }));
    assert_eq!(client.until(|e| e["type"] == "CONTROL")["payload"]["kind"], "VIBRATE_OFF");
    let user = client.until(|e| e["type"] == "TRANSCRIPT");
    assert_eq!(user["payload"]["text"], "hello there");
    let reply = client.until(|e| e["type"] == "TRANSCRIPT");
    assert_eq!(reply["payload"]["role"], "OBJECT");
    let clip = client.until(|e| e["type"] == "AUDIO_SEGMENT");
    assert!(audio.join(clip["payload"]["path"].as_str().unwrap()).exists());
    client.until(|e| e["type"] == "STATE" && e["payload"]["ack"] == 4);

    client.send(json!({ "type": "DANCE", "seq": 5, "payload": {} }));
    let bad = client.until(|e| e["type"] == "STATE" && e["payload"].get("error").is_some());
    assert!(bad["payload"]["error"].as_str().unwrap().contains("DANCE"));
}
