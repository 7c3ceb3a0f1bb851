//! Object personas: schema, validation, editing, storage and generation.

mod generate;
pub mod prompt;
mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use generate::{generate_persona, PersonaRequest};
pub use store::PersonaStore;

/// The seven selectable voice timbres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VoiceId {
    ElderlyFemale,
    YoungFemale,
    ChildFemale,
    ElderlyMale,
    YoungMale,
    ChildMale,
    Neutral,
}

impl VoiceId {
    pub const ALL: [VoiceId; 7] = [
        VoiceId::ElderlyFemale,
        VoiceId::YoungFemale,
        VoiceId::ChildFemale,
        VoiceId::ElderlyMale,
        VoiceId::YoungMale,
        VoiceId::ChildMale,
        VoiceId::Neutral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VoiceId::ElderlyFemale => "ELDERLY_FEMALE",
            VoiceId::YoungFemale => "YOUNG_FEMALE",
            VoiceId::ChildFemale => "CHILD_FEMALE",
            VoiceId::ElderlyMale => "ELDERLY_MALE",
            VoiceId::YoungMale => "YOUNG_MALE",
            VoiceId::ChildMale => "CHILD_MALE",
            VoiceId::Neutral => "NEUTRAL",
        }
    }
}

impl fmt::Display for VoiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VoiceId {
    type Err = PersonaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VoiceId::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| PersonaError::InvalidVoice(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Zh => "zh",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = PersonaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Language::En),
            "zh" => Ok(Language::Zh),
            other => Err(PersonaError::InvalidLanguage(other.to_string())),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PersonaError {
    #[error("persona document is not valid JSON: {0}")]
    ParseError(String),
    #[error("persona document is missing field `{0}`")]
    MissingField(&'static str),
    #[error("persona field `{field}` is invalid: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("invalid voice `{0}`")]
    InvalidVoice(String),
    #[error("invalid language `{0}`")]
    InvalidLanguage(String),
    #[error("unknown persona field `{0}`")]
    UnknownField(String),
    #[error("no persona stored for class {0}")]
    NotFound(u32),
    #[error("persona store I/O failure: {0}")]
    IoFailure(String),
    #[error("persona backend failed: {0}")]
    BackendFailure(String),
    #[error("persona backend produced an invalid document: {0}")]
    InvalidGeneration(Box<PersonaError>),
}

/// An object's anthropomorphic identity.
///
/// Field order here fixes the canonical JSON key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub gender: String,
    /// Free text ("about 30", "ancient").
    pub age: String,
    pub personality: String,
    pub backstory: String,
    pub voice: VoiceId,
    pub language: Language,
}

pub const FIELDS: [&str; 7] = [
    "name",
    "gender",
    "age",
    "personality",
    "backstory",
    "voice",
    "language",
];

impl Persona {
    /// Compact JSON with keys in schema order.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("persona serializes")
    }

    pub fn to_pretty_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("persona serializes");
        s.push('\n');
        s
    }

    fn check(&self) -> Result<(), PersonaError> {
        if self.name.trim().is_empty() {
            return Err(PersonaError::InvalidField {
                field: "name",
                reason: "must not be empty".into(),
            });
        }
        Ok(())
    }
}

/// Parses and checks a persona JSON document. Unknown keys are ignored.
pub fn validate_persona(document: &str) -> Result<Persona, PersonaError> {
    let value: Value =
        serde_json::from_str(document).map_err(|e| PersonaError::ParseError(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(PersonaError::ParseError("top level must be an object".into()));
    };
    let text = |field: &'static str| -> Result<String, PersonaError> {
        match map.get(field) {
            None | Some(Value::Null) => Err(PersonaError::MissingField(field)),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(other) => Err(PersonaError::InvalidField {
                field,
                reason: format!("expected a string, found {other}"),
            }),
        }
    };
    let persona = Persona {
        name: text("name")?,
        gender: text("gender")?,
        age: text("age")?,
        personality: text("personality")?,
        backstory: text("backstory")?,
        voice: text("voice")?.parse()?,
        language: text("language")?.parse()?,
    };
    persona.check()?;
    Ok(persona)
}

/// Applies user overrides (`field -> new value`) to a persona.
pub fn edit_persona(
    persona: &Persona,
    overrides: &BTreeMap<String, String>,
) -> Result<Persona, PersonaError> {
    let mut out = persona.clone();
    for (field, value) in overrides {
        match field.as_str() {
            "name" => out.name = value.clone(),
            "gender" => out.gender = value.clone(),
            "age" => out.age = value.clone(),
            "personality" => out.personality = value.clone(),
            "backstory" => out.backstory = value.clone(),
            "voice" => out.voice = value.parse()?,
            "language" => out.language = value.parse()?,
            other => return Err(PersonaError::UnknownField(other.to_string())),
        }
    }
    out.check()?;
    Ok(out)
}
