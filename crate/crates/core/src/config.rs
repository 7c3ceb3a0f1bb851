//! Runtime configuration.
//!
//! A JSON file supplies defaults; `TALKSPELL_*` environment variables
//! override it; command-line flags override both.
//!
//! ```json
//! {
//!   "root": "talkspell-data",
//!   "language": "en",
//!   "seed": 7,
//!   "confidence_threshold": 0.75,
//!   "grace_ms": 2000,
//!   "marker": "§",
//!   "parallelism": 2,
//!   "temperature": 0.7,
//!   "max_tokens": 256,
//!   "backends": {
//!     "default": { "kind": "mock" },
//!     "chat": { "kind": "http", "endpoint": "http://127.0.0.1:8080", "api_key_env": "CHAT_KEY" }
//!   }
//! }
//! ```
//!
//! Backend slots are `segmenter`, `trainer`, `detector`,
//! `persona_generator`, `transcriber`, `chat` and `synthesizer`; any slot
//! not listed falls back to `default`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::mock::MockOptions;
use crate::backends::{BackendConfig, BackendError, BackendKind, CapabilitySet, Slot};
use crate::clock::SharedClock;
use crate::dialogue::request::{DEFAULT_MARKER, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::dialogue::synth::DEFAULT_PARALLELISM;
use crate::dialogue::ChatParams;
use crate::orchestrator::{BondingParams, SessionConfig, DEFAULT_GRACE_MS};
use crate::persona::Language;
use crate::vision::DEFAULT_CONFIDENCE_THRESHOLD;

pub const ENV_PREFIX: &str = "TALKSPELL_";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid value for {key}: {value}")]
    BadValue { key: String, value: String },
}

impl From<BackendError> for ConfigError {
    fn from(e: BackendError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub root: PathBuf,
    pub language: Language,
    pub seed: u64,
    pub confidence_threshold: f64,
    pub grace_ms: u64,
    pub marker: String,
    pub parallelism: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub backends: BTreeMap<String, BackendConfig>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            root: PathBuf::from("talkspell-data"),
            language: Language::En,
            seed: 7,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            grace_ms: DEFAULT_GRACE_MS,
            marker: DEFAULT_MARKER.to_string(),
            parallelism: DEFAULT_PARALLELISM,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            backends: BTreeMap::new(),
        }
    }
}

fn bad(key: &str, value: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| bad(key, value))
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(bad("confidence_threshold", &self.confidence_threshold.to_string()));
        }
        if self.parallelism == 0 {
            return Err(bad("parallelism", "0"));
        }
        for (slot, cfg) in &self.backends {
            if slot != "default" && !Slot::ALL.iter().any(|s| s.as_str() == slot) {
                return Err(ConfigError::Invalid(format!("unknown backend slot `{slot}`")));
            }
            cfg.validate()?;
        }
        Ok(())
    }

    /// Applies one `key=value` override; keys match the file's field names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "root" => self.root = PathBuf::from(value),
            "language" => self.language = value.parse().map_err(|_| bad(key, value))?,
            "seed" => self.seed = parse(key, value)?,
            "confidence_threshold" => self.confidence_threshold = parse(key, value)?,
            "grace_ms" => self.grace_ms = parse(key, value)?,
            "marker" => self.marker = value.to_string(),
            "parallelism" => self.parallelism = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "max_tokens" => self.max_tokens = parse(key, value)?,
            "backends" => self.set_all_backends(parse::<BackendKind>(key, value)?, None),
            "endpoint" => {
                let kind = self.default_backend().kind;
                self.set_all_backends(kind, Some(value.to_string()));
            }
            _ => return Err(ConfigError::Invalid(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    /// Routes every slot to `kind`, keeping a configured endpoint unless
    /// `endpoint` replaces it.
    pub fn set_all_backends(&mut self, kind: BackendKind, endpoint: Option<String>) {
        let endpoint = endpoint.or_else(|| self.default_backend().endpoint);
        let base = self.default_backend();
        self.backends.clear();
        self.backends.insert(
            "default".into(),
            BackendConfig {
                kind,
                endpoint,
                ..base
            },
        );
    }

    /// Overrides from `TALKSPELL_<KEY>` variables, e.g. `TALKSPELL_GRACE_MS`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| Some((k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase(), v)))
            .collect();
        // `backends` must land before `endpoint` so the endpoint survives.
        found.sort_by_key(|(k, _)| (k != "backends", k.clone()));
        for (key, value) in found {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn default_backend(&self) -> BackendConfig {
        self.backends.get("default").cloned().unwrap_or_else(BackendConfig::mock)
    }

    pub fn backend_for(&self, slot: Slot) -> BackendConfig {
        self.backends
            .get(slot.as_str())
            .cloned()
            .unwrap_or_else(|| self.default_backend())
    }

    pub fn capabilities(&self, clock: SharedClock) -> Result<CapabilitySet, ConfigError> {
        Ok(CapabilitySet::from_configs(|s| self.backend_for(s), MockOptions::default(), clock)?)
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            confidence_threshold: self.confidence_threshold,
            grace_ms: self.grace_ms,
            bonding: BondingParams {
                chat: ChatParams {
                    marker: self.marker.clone(),
                    temperature: self.temperature,
                    max_tokens: self.max_tokens,
                },
                parallelism: self.parallelism,
            },
            language: self.language,
            seed: self.seed,
            audio_dir: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(Config::from_json(&text).unwrap(), cfg);
        assert_eq!(Config::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn env_overrides_file_and_per_slot_fallback() {
        let mut cfg = Config::from_json(
            r#"{"grace_ms": 500, "backends": {"chat": {"kind": "http", "endpoint": "http://x"}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.backend_for(Slot::Chat).kind, BackendKind::Http);
        assert_eq!(cfg.backend_for(Slot::Detector).kind, BackendKind::Mock);
        cfg.apply_env([
            ("TALKSPELL_GRACE_MS".to_string(), "900".to_string()),
            ("TALKSPELL_ENDPOINT".to_string(), "http://y".to_string()),
            ("TALKSPELL_BACKENDS".to_string(), "http".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ])
        .unwrap();
        assert_eq!(cfg.grace_ms, 900);
        let chat = cfg.backend_for(Slot::Chat);
        assert_eq!((chat.kind, chat.endpoint.as_deref()), (BackendKind::Http, Some("http://y")));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_json(r#"{"confidence_threshold": 1.5}"#).is_err());
        assert!(Config::from_json(r#"{"backends": {"oracle": {"kind": "mock"}}}"#).is_err());
        assert!(Config::from_json(r#"{"colour": 1}"#).is_err());
        assert!(Config::default().set("seed", "x").is_err());
        assert!(Config::from_json(r#"{"backends": {"default": {"kind": "http"}}}"#).is_err());
    }
}
