//! JSON-over-HTTP adapters, one per capability.
//!
//! Every call is a `POST` of a JSON document to `<endpoint><route>`.
//! Transport failures and 5xx replies are retried with exponential backoff
//! (250 ms, doubling); 4xx replies and malformed bodies are not.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    BackendConfig, BackendError, ChatModel, Detector, DetectorOutput, PersonaGenerator, Segmenter,
    Synthesis, Synthesizer, TrainJob, TrainedModel, Trainer, Transcriber,
};
use crate::audio::{decode_wav, encode_wav};
use crate::clock::SharedClock;
use crate::dialogue::ChatRequest;
use crate::imaging::{b64_decode, b64_encode, frame_from_b64, frame_to_b64};
use crate::persona::{Language, PersonaRequest, VoiceId};
use crate::protocol::ScopeFrame;
use crate::vision::{Detection, Mask, MaskCandidate, ModelArtifact, ModelHandle};

pub const BACKOFF_BASE_MS: u64 = 250;
pub const BACKOFF_FACTOR: u64 = 2;

pub const ROUTE_SEGMENT: &str = "/segment";
pub const ROUTE_TRAIN: &str = "/train";
pub const ROUTE_DETECT: &str = "/detect";
pub const ROUTE_PERSONA: &str = "/persona";
pub const ROUTE_STT: &str = "/stt";
pub const ROUTE_CHAT: &str = "/chat";
pub const ROUTE_TTS: &str = "/tts";

/// Request and response documents for each route.
pub mod wire {
    use serde::{Deserialize, Serialize};

    use crate::persona::{Language, VoiceId};
    use crate::vision::{BBox, TrainReport};

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Image {
        pub sequence: u32,
        /// PNG, base64.
        pub image_b64: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct SegmentResponse {
        pub masks: Vec<WireMask>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct WireMask {
        pub width: u32,
        pub height: u32,
        pub saliency: f64,
        /// Row-major bits, most significant bit first, base64.
        pub bits_b64: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TrainSample {
        pub dataset: usize,
        pub split: String,
        pub class_id: u32,
        pub bbox: BBox,
        pub image: Image,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TrainRequest {
        pub class_names: Vec<String>,
        pub epochs: u32,
        pub patience: u32,
        #[serde(default)]
        pub pretrained_model_id: Option<String>,
        pub samples: Vec<TrainSample>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TrainResponse {
        pub model_id: String,
        pub report: TrainReport,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct DetectRequest {
        pub model_id: String,
        pub image: Image,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct WireDetection {
        pub class_id: u32,
        pub bbox: BBox,
        pub confidence: f64,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct DetectResponse {
        pub detections: Vec<WireDetection>,
        #[serde(default)]
        pub compute_ms: Option<f64>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct PersonaRequestDoc {
        pub image_b64: String,
        pub language: Language,
        pub prompt: String,
        pub prompt_version: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct SttRequest {
        /// WAV, base64.
        pub audio_b64: String,
        pub language: Language,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TextResponse {
        pub text: String,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TtsRequest {
        pub text: String,
        pub voice: VoiceId,
        pub language: Language,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TtsResponse {
        /// WAV, base64.
        pub audio_b64: String,
        #[serde(default)]
        pub compute_ms: Option<f64>,
    }
}

pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i))))
        .collect()
}

pub fn unpack_bits(bytes: &[u8], len: usize) -> Option<Vec<bool>> {
    if bytes.len() != len.div_ceil(8) {
        return None;
    }
    Some((0..len).map(|i| bytes[i / 8] & (1 << (7 - i % 8)) != 0).collect())
}

pub fn image_doc(frame: &ScopeFrame) -> Result<wire::Image, BackendError> {
    Ok(wire::Image {
        sequence: frame.sequence,
        image_b64: frame_to_b64(frame).map_err(|e| BackendError::Failed(e.to_string()))?,
    })
}

pub fn image_from_doc(doc: &wire::Image) -> Result<ScopeFrame, String> {
    frame_from_b64(&doc.image_b64, doc.sequence)
}

/// Blocking JSON client for one capability endpoint.
#[derive(Clone)]
pub struct HttpClient {
    config: BackendConfig,
    agent: ureq::Agent,
    clock: SharedClock,
    api_key: Option<String>,
}

impl HttpClient {
    pub fn new(config: BackendConfig, clock: SharedClock) -> Result<Self, BackendError> {
        config.validate()?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(Self {
            config,
            agent,
            clock,
            api_key,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn url(&self, route: &str) -> String {
        let base = self.config.endpoint.as_deref().unwrap_or_default();
        format!("{}{}", base.trim_end_matches('/'), route)
    }

    fn attempt(&self, route: &str, body: &str) -> Result<String, BackendError> {
        let mut req = self
            .agent
            .post(&self.url(route))
            .set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_string(body) {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| BackendError::Transport(e.to_string())),
            Err(ureq::Error::Status(status, resp)) => Err(BackendError::Remote {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("Timeout") {
                    Err(BackendError::Timeout)
                } else {
                    Err(BackendError::Transport(msg))
                }
            }
        }
    }

    /// Posts `body` to `route` and returns the raw response text.
    pub fn call_raw(&self, route: &str, body: &str) -> Result<String, BackendError> {
        let mut delay = BACKOFF_BASE_MS;
        let mut attempt = 0;
        loop {
            let err = match self.attempt(route, body) {
                Ok(text) => return Ok(text),
                Err(e) => e,
            };
            let retryable = match &err {
                BackendError::Timeout | BackendError::Transport(_) => true,
                BackendError::Remote { status, .. } => *status >= 500,
                _ => false,
            };
            if !retryable || attempt >= self.config.retries {
                return Err(err);
            }
            log::warn!("{route}: {err}; retrying in {delay} ms");
            self.clock.sleep_ms(delay);
            delay *= BACKOFF_FACTOR;
            attempt += 1;
        }
    }

    /// Posts a typed request and validates the typed response.
    pub fn call<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        route: &str,
        request: &Req,
    ) -> Result<Resp, BackendError> {
        let body = serde_json::to_string(request).map_err(|e| BackendError::Failed(e.to_string()))?;
        let text = self.call_raw(route, &body)?;
        serde_json::from_str(&text).map_err(|e| BackendError::Schema(format!("{route}: {e}")))
    }
}

macro_rules! adapter {
    ($name:ident) => {
        #[derive(Clone)]
        pub struct $name {
            client: HttpClient,
        }

        impl $name {
            pub fn new(client: HttpClient) -> Self {
                Self { client }
            }
        }
    };
}

adapter!(HttpSegmenter);
adapter!(HttpTrainer);
adapter!(HttpDetector);
adapter!(HttpPersonaGenerator);
adapter!(HttpTranscriber);
adapter!(HttpChat);
adapter!(HttpSynthesizer);

impl Segmenter for HttpSegmenter {
    fn segment(&self, frame: &ScopeFrame) -> Result<Vec<MaskCandidate>, BackendError> {
        let resp: wire::SegmentResponse = self.client.call(ROUTE_SEGMENT, &image_doc(frame)?)?;
        resp.masks
            .into_iter()
            .map(|m| {
                if (m.width, m.height) != (frame.width, frame.height) {
                    return Err(BackendError::Schema("mask size differs from frame".into()));
                }
                let bytes = b64_decode(&m.bits_b64).map_err(BackendError::Schema)?;
                let bits = unpack_bits(&bytes, (m.width * m.height) as usize)
                    .ok_or_else(|| BackendError::Schema("mask bit length".into()))?;
                Ok(MaskCandidate {
                    mask: Mask {
                        width: m.width,
                        height: m.height,
                        bits,
                    },
                    saliency: m.saliency,
                })
            })
            .collect()
    }
}

impl Trainer for HttpTrainer {
    fn train(&self, job: &TrainJob<'_>) -> Result<TrainedModel, BackendError> {
        let mut samples = Vec::new();
        for (index, dataset) in job.datasets.iter().enumerate() {
            for (split, items) in dataset.splits() {
                for s in items {
                    samples.push(wire::TrainSample {
                        dataset: index,
                        split: split.to_string(),
                        class_id: s.class_id,
                        bbox: s.bbox,
                        image: image_doc(&s.frame)?,
                    });
                }
            }
        }
        let request = wire::TrainRequest {
            class_names: job.class_names.to_vec(),
            epochs: job.epochs,
            patience: job.patience,
            pretrained_model_id: job.pretrained.map(|m| m.id.clone()),
            samples,
        };
        let resp: wire::TrainResponse = self.client.call(ROUTE_TRAIN, &request)?;
        Ok(TrainedModel {
            artifact: ModelArtifact::Remote {
                model_id: resp.model_id,
            },
            report: resp.report,
        })
    }
}

impl Detector for HttpDetector {
    fn detect(&self, frame: &ScopeFrame, model: &ModelHandle) -> Result<DetectorOutput, BackendError> {
        let ModelArtifact::Remote { model_id } = &model.artifact else {
            return Err(BackendError::Unsupported("HTTP detector needs a remote model".into()));
        };
        let request = wire::DetectRequest {
            model_id: model_id.clone(),
            image: image_doc(frame)?,
        };
        let resp: wire::DetectResponse = self.client.call(ROUTE_DETECT, &request)?;
        let detections = resp
            .detections
            .into_iter()
            .map(|d| {
                if !d.bbox.is_valid() || !d.confidence.is_finite() {
                    return Err(BackendError::Schema(format!("bad detection {d:?}")));
                }
                Ok(Detection {
                    class_id: d.class_id,
                    bbox: d.bbox,
                    confidence: d.confidence,
                    latency_ms: 0.0,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(DetectorOutput {
            detections,
            compute_ms: resp.compute_ms,
        })
    }
}

impl PersonaGenerator for HttpPersonaGenerator {
    fn generate(&self, request: &PersonaRequest) -> Result<String, BackendError> {
        let doc = wire::PersonaRequestDoc {
            image_b64: image_doc(&request.frame)?.image_b64,
            language: request.language,
            prompt: request.prompt.clone(),
            prompt_version: request.prompt_version.clone(),
        };
        let body = serde_json::to_string(&doc).map_err(|e| BackendError::Failed(e.to_string()))?;
        let text = self.client.call_raw(ROUTE_PERSONA, &body)?;
        // Field-level validation belongs to the persona module; only the
        // document shape is checked here.
        match serde_json::from_str::<serde_json::Value>(&text) {
            Ok(serde_json::Value::Object(_)) => Ok(text),
            _ => Err(BackendError::Schema(format!("{ROUTE_PERSONA}: expected a JSON object"))),
        }
    }
}

impl Transcriber for HttpTranscriber {
    fn transcribe(&self, wav: &[u8], language: Language) -> Result<String, BackendError> {
        let request = wire::SttRequest {
            audio_b64: b64_encode(wav),
            language,
        };
        let resp: wire::TextResponse = self.client.call(ROUTE_STT, &request)?;
        Ok(resp.text)
    }
}

impl ChatModel for HttpChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let resp: wire::TextResponse = self.client.call(ROUTE_CHAT, request)?;
        Ok(resp.text)
    }
}

impl Synthesizer for HttpSynthesizer {
    fn synthesize(&self, text: &str, voice: VoiceId, language: Language) -> Result<Synthesis, BackendError> {
        let request = wire::TtsRequest {
            text: text.to_string(),
            voice,
            language,
        };
        let resp: wire::TtsResponse = self.client.call(ROUTE_TTS, &request)?;
        let bytes = b64_decode(&resp.audio_b64).map_err(BackendError::Schema)?;
        let wav = decode_wav(&bytes).map_err(|e| BackendError::Schema(e.to_string()))?;
        Ok(Synthesis {
            samples: wav.samples,
            compute_ms: resp.compute_ms,
        })
    }
}

/// Encodes samples the way the TTS route returns them.
pub fn tts_audio_b64(samples: &[i16]) -> String {
    b64_encode(&encode_wav(samples, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bit_packing_round_trips(bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let packed = pack_bits(&bits);
            prop_assert_eq!(unpack_bits(&packed, bits.len()), Some(bits));
        }
    }
}
