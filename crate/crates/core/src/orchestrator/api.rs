//! Session API: line-delimited JSON over a local TCP socket.
//!
//! Every line is `{"type": ..., "payload": ..., "seq": n}`. The server
//! sends `STATE`, `DETECTION`, `TRANSCRIPT`, `AUDIO_SEGMENT` and `CONTROL`
//! events; `seq` counts up from 0 on each connection. Clients send
//! commands in the same envelope:
//!
//! ```text
//! {"type":"WAND","payload":{"kind":"TOUCH_DOWN"},"seq":0}
//! {"type":"SAY","payload":{"text":"hello"},"seq":1}
//! {"type":"PERSONA_EDIT","payload":{"class_id":0,"set":{"name":"Cuppie"}},"seq":2}
//! ```
//!
//! `SAY` supplies the words for the recording in progress (or the next
//! one). Each command is answered with a `STATE` event whose payload
//! carries `"ack": <command seq>`, or `"error"` when it was rejected.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::session::{Session, TypedMicrophone};
use crate::protocol::{FrameSource, ScopeFrame, WandKind, WandMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    State,
    Detection,
    Transcript,
    AudioSegment,
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub payload: Value,
    pub seq: u64,
}

impl SessionEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Wand { kind: WandKind },
    Say { text: String },
    PersonaEdit { class_id: u32, set: BTreeMap<String, String> },
}

#[derive(Deserialize)]
struct Envelope {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    payload: Value,
    #[serde(default)]
    seq: Option<u64>,
}

#[derive(Deserialize)]
struct WandPayload {
    kind: WandKind,
}

#[derive(Deserialize)]
struct SayPayload {
    text: String,
}

#[derive(Deserialize)]
struct EditPayload {
    class_id: u32,
    set: BTreeMap<String, String>,
}

impl Command {
    /// Parses one command line into `(command, seq)`.
    pub fn parse(line: &str) -> Result<(Self, Option<u64>), String> {
        let env: Envelope = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let cmd = match env.kind.as_str() {
            "WAND" => {
                let p: WandPayload = serde_json::from_value(env.payload).map_err(|e| e.to_string())?;
                Command::Wand { kind: p.kind }
            }
            "SAY" => {
                let p: SayPayload = serde_json::from_value(env.payload).map_err(|e| e.to_string())?;
                Command::Say { text: p.text }
            }
            "PERSONA_EDIT" => {
                let p: EditPayload = serde_json::from_value(env.payload).map_err(|e| e.to_string())?;
                Command::PersonaEdit {
                    class_id: p.class_id,
                    set: p.set,
                }
            }
            other => return Err(format!("unknown command type `{other}`")),
        };
        Ok((cmd, env.seq))
    }
}

enum Input {
    Connected(u64, TcpStream),
    Line(u64, String),
    Closed(u64),
    FrameReady,
}

struct Client {
    stream: TcpStream,
    next_seq: u64,
}

impl Client {
    fn send(&mut self, kind: EventKind, payload: Value) -> bool {
        let event = SessionEvent {
            kind,
            payload,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        let mut line = event.to_line();
        line.push('\n');
        self.stream.write_all(line.as_bytes()).is_ok()
    }
}

/// A running session API server. Dropping it stops every thread.
pub struct ApiServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl std::fmt::Debug for ApiServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ApiServer").field("addr", &self.addr).finish_non_exhaustive()
    }
}

impl ApiServer {
    /// Binds `bind` and moves `session` onto the session loop thread.
    /// Frames from `frames`, if given, are pulled every `frame_interval`;
    /// only the newest unprocessed frame is kept.
    pub fn spawn(
        session: Session,
        bind: &str,
        frames: Option<Box<dyn FrameSource>>,
        frame_interval: Duration,
    ) -> std::io::Result<Self> {
        let listener = TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel::<Input>();
        let latest: Arc<Mutex<Option<ScopeFrame>>> = Arc::default();
        let mut threads = vec![];

        {
            let (tx, stop) = (tx.clone(), Arc::clone(&stop));
            threads.push(thread::spawn(move || accept_loop(listener, tx, stop)));
        }
        if let Some(mut source) = frames {
            let (tx, stop, latest) = (tx.clone(), Arc::clone(&stop), Arc::clone(&latest));
            threads.push(thread::spawn(move || {
                while !stop.load(Ordering::Acquire) {
                    match source.next_frame() {
                        Ok(frame) => {
                            *latest.lock().unwrap() = Some(frame);
                            if tx.send(Input::FrameReady).is_err() {
                                break;
                            }
                        }
                        Err(e) => {
                            log::warn!("frame source stopped: {e}");
                            break;
                        }
                    }
                    thread::sleep(frame_interval);
                }
            }));
        }
        drop(tx);
        {
            let stop = Arc::clone(&stop);
            threads.push(thread::spawn(move || session_loop(session, rx, latest, stop)));
        }
        Ok(Self { addr, stop, threads })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server is stopped from another handle or thread.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ApiServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Input>, stop: Arc<AtomicBool>) {
    let mut next_id = 0;
    while !stop.load(Ordering::Acquire) {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = stream.set_nonblocking(false);
                let Ok(reader) = stream.try_clone() else { continue };
                let id = next_id;
                next_id += 1;
                if tx.send(Input::Connected(id, stream)).is_err() {
                    return;
                }
                let tx = tx.clone();
                thread::spawn(move || {
                    for line in BufReader::new(reader).lines() {
                        let Ok(line) = line else { break };
                        if !line.trim().is_empty() && tx.send(Input::Line(id, line)).is_err() {
                            return;
                        }
                    }
                    let _ = tx.send(Input::Closed(id));
                });
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                log::error!("accept failed: {e}");
                return;
            }
        }
    }
}

fn session_loop(
    mut session: Session,
    rx: mpsc::Receiver<Input>,
    latest: Arc<Mutex<Option<ScopeFrame>>>,
    stop: Arc<AtomicBool>,
) {
    let mut clients: BTreeMap<u64, Client> = BTreeMap::new();
    let mut mic = TypedMicrophone::default();
    let mut wand_seq: u16 = 0;
    while !stop.load(Ordering::Acquire) {
        let input = match rx.recv_timeout(Duration::from_millis(50)) {
            Ok(i) => Some(i),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => break,
        };
        let mut reply: Option<(u64, Value)> = None;
        match input {
            None => {}
            Some(Input::Connected(id, stream)) => {
                let mut client = Client { stream, next_seq: 0 };
                client.send(EventKind::State, state_payload(&session));
                clients.insert(id, client);
            }
            Some(Input::Closed(id)) => {
                clients.remove(&id);
            }
            Some(Input::FrameReady) => {
                if let Some(frame) = latest.lock().unwrap().take() {
                    session.on_frame(&frame);
                }
            }
            Some(Input::Line(id, line)) => {
                let mut payload = state_payload(&session);
                match Command::parse(&line) {
                    Ok((cmd, seq)) => {
                        payload["ack"] = json!(seq);
                        let result = match cmd {
                            Command::Wand { kind } => {
                                let msg = WandMessage::new(kind, wand_seq);
                                wand_seq = wand_seq.wrapping_add(1);
                                session.on_wand(msg, &mut mic).map(|_| ())
                            }
                            Command::Say { text } => {
                                mic.say(text);
                                Ok(())
                            }
                            Command::PersonaEdit { class_id, set } => session.edit_persona(class_id, &set).map(|_| ()),
                        };
                        if let Err(e) = result {
                            payload["error"] = json!(e.to_string());
                        }
                    }
                    Err(e) => payload["error"] = json!(e),
                }
                let fresh = state_payload(&session);
                for key in ["state", "class_id", "label"] {
                    if let Some(v) = fresh.get(key) {
                        payload[key] = v.clone();
                    }
                }
                reply = Some((id, payload));
            }
        }
        if let Err(e) = session.on_tick(&mut mic) {
            log::warn!("auto-stopped cycle failed: {e}");
        }
        let _ = session.take_controls();
        let events = session.take_events();
        clients.retain(|_, c| events.iter().all(|e| c.send(e.kind, e.payload.clone())));
        if let Some((id, payload)) = reply {
            if let Some(c) = clients.get_mut(&id) {
                if !c.send(EventKind::State, payload) {
                    clients.remove(&id);
                }
            }
        }
    }
}

fn state_payload(session: &Session) -> Value {
    let state = session.state();
    let mut payload = json!({ "state": state.name() });
    let class = match state {
        super::SessionState::Tracking(c) | super::SessionState::Recording(c) => Some(c),
        _ => session.registry().active,
    };
    if let Some(c) = class {
        payload["class_id"] = json!(c);
        if let Some(p) = session.registry().get(c) {
            payload["label"] = json!(p.label);
        }
    }
    payload
}
