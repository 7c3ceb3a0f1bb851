use std::sync::Arc;

use super::prompt::{persona_prompt, PROMPT_VERSION};
use super::{validate_persona, Language, Persona, PersonaError};
use crate::backends::PersonaGenerator;
use crate::protocol::ScopeFrame;

/// What the persona backend receives.
#[derive(Debug, Clone)]
pub struct PersonaRequest {
    pub frame: Arc<ScopeFrame>,
    pub language: Language,
    pub prompt: String,
    pub prompt_version: String,
}

impl PersonaRequest {
    pub fn new(frame: Arc<ScopeFrame>, language: Language) -> Self {
        Self {
            frame,
            language,
            prompt: persona_prompt(language).to_string(),
            prompt_version: PROMPT_VERSION.to_string(),
        }
    }
}

/// Asks the backend for a persona, validating the result. One retry is made
/// when the backend's document fails validation.
pub fn generate_persona(
    frame: Arc<ScopeFrame>,
    language: Language,
    backend: &dyn PersonaGenerator,
) -> Result<Persona, PersonaError> {
    let request = PersonaRequest::new(frame, language);
    let mut last_invalid = None;
    for _ in 0..2 {
        let document = backend
            .generate(&request)
            .map_err(|e| PersonaError::BackendFailure(e.to_string()))?;
        match validate_persona(&document) {
            Ok(p) if p.language == language => return Ok(p),
            Ok(p) => {
                last_invalid = Some(PersonaError::InvalidLanguage(p.language.to_string()));
            }
            Err(e) => last_invalid = Some(e),
        }
    }
    Err(PersonaError::InvalidGeneration(Box::new(
        last_invalid.expect("at least one attempt"),
    )))
}
