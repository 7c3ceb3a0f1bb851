//! Pluggable model capabilities.
//!
//! Each model the engine needs sits behind one trait. Two families of
//! implementations exist: deterministic [`mock`]s for desk-scale runs and
//! tests, and [`http`] adapters that speak JSON to external inference
//! services. [`stub`] serves the mocks over HTTP so the adapters can be
//! exercised end to end.

pub mod http;
pub mod mock;
pub mod stub;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SharedClock;
use crate::dialogue::ChatRequest;
use crate::persona::{Language, PersonaRequest, VoiceId};
use crate::protocol::ScopeFrame;
use crate::vision::{Dataset, Detection, MaskCandidate, ModelArtifact, ModelHandle, TrainReport};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("response failed schema validation: {0}")]
    Schema(String),
    #[error("remote error {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("backend failed: {0}")]
    Failed(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

pub trait Segmenter: Send + Sync {
    /// Candidate object masks for `frame`, each with a saliency score.
    fn segment(&self, frame: &ScopeFrame) -> Result<Vec<MaskCandidate>, BackendError>;
}

/// A training job over the union of every dataset seen so far.
#[derive(Debug, Clone, Copy)]
pub struct TrainJob<'a> {
    pub datasets: &'a [Arc<Dataset>],
    pub class_names: &'a [String],
    pub epochs: u32,
    pub patience: u32,
    pub pretrained: Option<&'a ModelHandle>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub artifact: ModelArtifact,
    pub report: TrainReport,
}

pub trait Trainer: Send + Sync {
    fn train(&self, job: &TrainJob<'_>) -> Result<TrainedModel, BackendError>;
}

/// Raw detector output before thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput {
    pub detections: Vec<Detection>,
    /// Inference time reported by the backend itself, if it reports one.
    pub compute_ms: Option<f64>,
}

pub trait Detector: Send + Sync {
    fn detect(&self, frame: &ScopeFrame, model: &ModelHandle) -> Result<DetectorOutput, BackendError>;
}

pub trait PersonaGenerator: Send + Sync {
    /// Returns the persona JSON document exactly as produced.
    fn generate(&self, request: &PersonaRequest) -> Result<String, BackendError>;
}

pub trait Transcriber: Send + Sync {
    fn transcribe(&self, wav: &[u8], language: Language) -> Result<String, BackendError>;
}

pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub samples: Vec<i16>,
    /// Synthesis time reported by the backend itself, if it reports one.
    pub compute_ms: Option<f64>,
}

pub trait Synthesizer: Send + Sync {
    fn synthesize(&self, text: &str, voice: VoiceId, language: Language) -> Result<Synthesis, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => Err(BackendError::Config(format!("unknown backend kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            api_key_env: None,
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            ..Self::mock()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::Http && self.endpoint.as_deref().map_or(true, str::is_empty) {
            return Err(BackendError::Config("HTTP backend requires an endpoint".into()));
        }
        Ok(())
    }
}

/// The seven capability slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Segmenter,
    Trainer,
    Detector,
    PersonaGenerator,
    Transcriber,
    Chat,
    Synthesizer,
}

impl Slot {
    pub const ALL: [Slot; 7] = [
        Slot::Segmenter,
        Slot::Trainer,
        Slot::Detector,
        Slot::PersonaGenerator,
        Slot::Transcriber,
        Slot::Chat,
        Slot::Synthesizer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Segmenter => "segmenter",
            Slot::Trainer => "trainer",
            Slot::Detector => "detector",
            Slot::PersonaGenerator => "persona_generator",
            Slot::Transcriber => "transcriber",
            Slot::Chat => "chat",
            Slot::Synthesizer => "synthesizer",
        }
    }
}

/// One backend per capability; every slot must be filled to run a session.
#[derive(Clone)]
pub struct CapabilitySet {
    pub segmenter: Arc<dyn Segmenter>,
    pub trainer: Arc<dyn Trainer>,
    pub detector: Arc<dyn Detector>,
    pub persona_generator: Arc<dyn PersonaGenerator>,
    pub transcriber: Arc<dyn Transcriber>,
    pub chat: Arc<dyn ChatModel>,
    pub synthesizer: Arc<dyn Synthesizer>,
}

impl fmt::Debug for CapabilitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CapabilitySet { .. }")
    }
}

impl CapabilitySet {
    /// All-mock set with default behaviour.
    pub fn mock() -> Self {
        mock::MockOptions::default().build()
    }

    /// Builds a set from per-slot configuration.
    pub fn from_configs(
        config_for: impl Fn(Slot) -> BackendConfig,
        mock_options: mock::MockOptions,
        clock: SharedClock,
    ) -> Result<Self, BackendError> {
        let mocks = mock_options.build();
        let client = |slot: Slot| -> Result<Option<http::HttpClient>, BackendError> {
            let cfg = config_for(slot);
            cfg.validate()?;
            Ok(match cfg.kind {
                BackendKind::Mock => None,
                BackendKind::Http => Some(http::HttpClient::new(cfg, Arc::clone(&clock))?),
            })
        };
        Ok(Self {
            segmenter: match client(Slot::Segmenter)? {
                Some(c) => Arc::new(http::HttpSegmenter::new(c)),
                None => mocks.segmenter,
            },
            trainer: match client(Slot::Trainer)? {
                Some(c) => Arc::new(http::HttpTrainer::new(c)),
                None => mocks.trainer,
            },
            detector: match client(Slot::Detector)? {
                Some(c) => Arc::new(http::HttpDetector::new(c)),
                None => mocks.detector,
            },
            persona_generator: match client(Slot::PersonaGenerator)? {
                Some(c) => Arc::new(http::HttpPersonaGenerator::new(c)),
                None => mocks.persona_generator,
            },
            transcriber: match client(Slot::Transcriber)? {
                Some(c) => Arc::new(http::HttpTranscriber::new(c)),
                None => mocks.transcriber,
            },
            chat: match client(Slot::Chat)? {
                Some(c) => Arc::new(http::HttpChat::new(c)),
                None => mocks.chat,
            },
            synthesizer: match client(Slot::Synthesizer)? {
                Some(c) => Arc::new(http::HttpSynthesizer::new(c)),
                None => mocks.synthesizer,
            },
        })
    }

    /// Every slot backed by the HTTP adapter against one base URL.
    pub fn http(base_url: &str, clock: SharedClock) -> Result<Self, BackendError> {
        Self::from_configs(
            |_| BackendConfig::http(base_url),
            mock::MockOptions::default(),
            clock,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn http_requires_endpoint() {
        let mut cfg = BackendConfig::mock();
        assert!(cfg.validate().is_ok());
        cfg.kind = BackendKind::Http;
        assert!(matches!(cfg.validate(), Err(BackendError::Config(_))));
        assert!(BackendConfig::http("http://127.0.0.1:9").validate().is_ok());
    }

    #[test]
    fn config_json_shape() {
        let cfg: BackendConfig =
            serde_json::from_str(r#"{"kind":"http","endpoint":"http://x","retries":0}"#).unwrap();
        assert_eq!(cfg.retries, 0);
        assert_eq!(cfg.timeout_ms, 30_000);
        assert!(serde_json::from_str::<BackendConfig>(r#"{"kind":"http","bogus":1}"#).is_err());
        assert_eq!("mock".parse::<BackendKind>().unwrap(), BackendKind::Mock);
    }
}
