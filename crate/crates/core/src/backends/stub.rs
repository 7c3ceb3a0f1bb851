//! Local HTTP server answering every capability route with the mocks.
//!
//! Used to exercise the HTTP adapters end to end and as a stand-in service
//! during development.

use std::collections::{HashMap, VecDeque};
use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use tiny_http::{Header, Method, Response, Server};

use super::http::{self, wire};
use super::mock::MockOptions;
use super::{BackendError, CapabilitySet, TrainJob};
use crate::audio::decode_wav;
use crate::dialogue::ChatRequest;
use crate::imaging::b64_decode;
use crate::persona::PersonaRequest;
use crate::vision::{AnnotatedSample, Dataset, ModelHandle};

/// A canned reply served instead of the real handler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    Status(u16),
    Malformed,
    Delay(Duration),
}

struct State {
    mocks: CapabilitySet,
    models: Mutex<HashMap<String, ModelHandle>>,
    next_model: AtomicU64,
    faults: Mutex<VecDeque<Fault>>,
    token: Option<String>,
    hits: Mutex<Vec<String>>,
}

pub struct StubServer {
    addr: SocketAddr,
    state: Arc<State>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn spawn(bind: &str, options: MockOptions) -> io::Result<Self> {
        Self::spawn_with_token(bind, options, None)
    }

    /// As [`spawn`](Self::spawn), but rejects requests lacking
    /// `Authorization: Bearer <token>`.
    pub fn spawn_with_token(bind: &str, options: MockOptions, token: Option<String>) -> io::Result<Self> {
        let server = Server::http(bind).map_err(|e| io::Error::new(io::ErrorKind::AddrNotAvailable, e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::new(io::ErrorKind::Unsupported, "not an IP listener"))?;
        let state = Arc::new(State {
            mocks: options.build(),
            models: Mutex::new(HashMap::new()),
            next_model: AtomicU64::new(0),
            faults: Mutex::new(VecDeque::new()),
            token,
            hits: Mutex::new(Vec::new()),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let state = Arc::clone(&state);
            let stop = Arc::clone(&stop);
            thread::Builder::new().name("stub-http".into()).spawn(move || {
                while !stop.load(Ordering::Acquire) {
                    match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(request)) => {
                            let state = Arc::clone(&state);
                            thread::spawn(move || serve(&state, request));
                        }
                        Ok(None) => {}
                        Err(_) => break,
                    }
                }
            })?
        };
        Ok(Self {
            addr,
            state,
            stop,
            handle: Some(handle),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Queues faults served, in order, to the next requests.
    pub fn inject(&self, faults: impl IntoIterator<Item = Fault>) {
        self.state.faults.lock().unwrap().extend(faults);
    }

    /// Routes requested so far, in arrival order.
    pub fn hits(&self) -> Vec<String> {
        self.state.hits.lock().unwrap().clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").unwrap()
}

fn serve(state: &State, mut request: tiny_http::Request) {
    let route = request.url().to_string();
    state.hits.lock().unwrap().push(route.clone());
    let mut body = String::new();
    let read = request.as_reader().read_to_string(&mut body);
    let authorized = state.token.as_ref().map_or(true, |token| {
        let expected = format!("Bearer {token}");
        request
            .headers()
            .iter()
            .any(|h| h.field.equiv("Authorization") && h.value.as_str() == expected)
    });
    let fault = state.faults.lock().unwrap().pop_front();
    let (status, text) = if let Some(fault) = fault {
        match fault {
            Fault::Status(code) => (code, format!("injected status {code}")),
            Fault::Malformed => (200, "{not json".to_string()),
            Fault::Delay(d) => {
                thread::sleep(d);
                handle(state, &route, &body)
            }
        }
    } else if read.is_err() {
        (400, "unreadable body".into())
    } else if *request.method() != Method::Post {
        (405, "POST only".into())
    } else if !authorized {
        (401, "missing or wrong bearer token".into())
    } else {
        handle(state, &route, &body)
    };
    let response = Response::from_string(text)
        .with_status_code(status)
        .with_header(json_header());
    let _ = request.respond(response);
}

fn status_for(e: &BackendError) -> u16 {
    match e {
        BackendError::Timeout => 504,
        BackendError::Unsupported(_) | BackendError::Config(_) | BackendError::Schema(_) => 400,
        BackendError::Remote { status, .. } => *status,
        BackendError::Transport(_) | BackendError::Failed(_) => 500,
    }
}

fn parse<T: DeserializeOwned>(body: &str) -> Result<T, (u16, String)> {
    serde_json::from_str(body).map_err(|e| (400, format!("bad request: {e}")))
}

fn reply<T: Serialize>(value: Result<T, BackendError>) -> Result<String, (u16, String)> {
    match value {
        Ok(v) => Ok(serde_json::to_string(&v).expect("serializable response")),
        Err(e) => Err((status_for(&e), e.to_string())),
    }
}

fn handle(state: &State, route: &str, body: &str) -> (u16, String) {
    match dispatch(state, route, body) {
        Ok(text) => (200, text),
        Err(err) => err,
    }
}

fn dispatch(state: &State, route: &str, body: &str) -> Result<String, (u16, String)> {
    let m = &state.mocks;
    let bad = |e: String| (400, e);
    match route {
        http::ROUTE_SEGMENT => {
            let doc: wire::Image = parse(body)?;
            let frame = http::image_from_doc(&doc).map_err(bad)?;
            reply(m.segmenter.segment(&frame).map(|masks| wire::SegmentResponse {
                masks: masks
                    .into_iter()
                    .map(|c| wire::WireMask {
                        width: c.mask.width,
                        height: c.mask.height,
                        saliency: c.saliency,
                        bits_b64: crate::imaging::b64_encode(&http::pack_bits(&c.mask.bits)),
                    })
                    .collect(),
            }))
        }
        http::ROUTE_TRAIN => {
            let doc: wire::TrainRequest = parse(body)?;
            let datasets = rebuild_datasets(&doc).map_err(bad)?;
            let job = TrainJob {
                datasets: &datasets,
                class_names: &doc.class_names,
                epochs: doc.epochs,
                patience: doc.patience,
                pretrained: None,
            };
            let trained = m.trainer.train(&job);
            reply(trained.map(|t| {
                let id = format!("stub-model-{}", state.next_model.fetch_add(1, Ordering::AcqRel));
                let handle = ModelHandle {
                    id: id.clone(),
                    class_names: doc.class_names.clone(),
                    artifact: t.artifact,
                    report: t.report,
                    lineage: datasets.clone(),
                };
                state.models.lock().unwrap().insert(id.clone(), handle);
                wire::TrainResponse {
                    model_id: id,
                    report: t.report,
                }
            }))
        }
        http::ROUTE_DETECT => {
            let doc: wire::DetectRequest = parse(body)?;
            let model = state
                .models
                .lock()
                .unwrap()
                .get(&doc.model_id)
                .cloned()
                .ok_or_else(|| (404, format!("unknown model {}", doc.model_id)))?;
            let frame = http::image_from_doc(&doc.image).map_err(bad)?;
            reply(m.detector.detect(&frame, &model).map(|out| wire::DetectResponse {
                detections: out
                    .detections
                    .into_iter()
                    .map(|d| wire::WireDetection {
                        class_id: d.class_id,
                        bbox: d.bbox,
                        confidence: d.confidence,
                    })
                    .collect(),
                compute_ms: out.compute_ms,
            }))
        }
        http::ROUTE_PERSONA => {
            let doc: wire::PersonaRequestDoc = parse(body)?;
            let frame = crate::imaging::frame_from_b64(&doc.image_b64, 0).map_err(bad)?;
            let request = PersonaRequest {
                frame: Arc::new(frame),
                language: doc.language,
                prompt: doc.prompt,
                prompt_version: doc.prompt_version,
            };
            m.persona_generator
                .generate(&request)
                .map_err(|e| (status_for(&e), e.to_string()))
        }
        http::ROUTE_STT => {
            let doc: wire::SttRequest = parse(body)?;
            let wav = b64_decode(&doc.audio_b64).map_err(bad)?;
            reply(
                m.transcriber
                    .transcribe(&wav, doc.language)
                    .map(|text| wire::TextResponse { text }),
            )
        }
        http::ROUTE_CHAT => {
            let doc: ChatRequest = parse(body)?;
            reply(m.chat.complete(&doc).map(|text| wire::TextResponse { text }))
        }
        http::ROUTE_TTS => {
            let doc: wire::TtsRequest = parse(body)?;
            reply(
                m.synthesizer
                    .synthesize(&doc.text, doc.voice, doc.language)
                    .map(|s| wire::TtsResponse {
                        audio_b64: http::tts_audio_b64(&s.samples),
                        compute_ms: s.compute_ms,
                    }),
            )
        }
        other => Err((404, format!("no route {other}"))),
    }
}

fn rebuild_datasets(doc: &wire::TrainRequest) -> Result<Vec<Arc<Dataset>>, String> {
    let count = doc.samples.iter().map(|s| s.dataset + 1).max().unwrap_or(0);
    let mut datasets: Vec<Dataset> = (0..count)
        .map(|_| Dataset {
            train: vec![],
            val: vec![],
            test: vec![],
            class_names: doc.class_names.clone(),
        })
        .collect();
    for s in &doc.samples {
        let sample = AnnotatedSample {
            frame: Arc::new(http::image_from_doc(&s.image)?),
            class_id: s.class_id,
            bbox: s.bbox,
        };
        let d = &mut datasets[s.dataset];
        match s.split.as_str() {
            "train" => d.train.push(sample),
            "val" => d.val.push(sample),
            "test" => d.test.push(sample),
            other => return Err(format!("unknown split {other}")),
        }
    }
    Ok(datasets.into_iter().map(Arc::new).collect())
}

/// Decodes a TTS reply body; handy for tests that call the route directly.
pub fn decode_tts_samples(resp: &wire::TtsResponse) -> Result<Vec<i16>, String> {
    let bytes = b64_decode(&resp.audio_b64)?;
    decode_wav(&bytes).map(|w| w.samples).map_err(|e| e.to_string())
}
