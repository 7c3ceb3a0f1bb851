use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::{validate_persona, Persona, PersonaError};
use crate::fsutil::write_atomic;

/// Persona documents on disk, one per class: `root/personas/<class_id>.json`.
#[derive(Debug, Clone)]
pub struct PersonaStore {
    dir: PathBuf,
}

impl PersonaStore {
    pub fn new(root: impl AsRef<Path>) -> Self {
        Self {
            dir: root.as_ref().join("personas"),
        }
    }

    pub fn path_for(&self, class_id: u32) -> PathBuf {
        self.dir.join(format!("{class_id}.json"))
    }

    pub fn store(&self, class_id: u32, persona: &Persona) -> Result<PathBuf, PersonaError> {
        let path = self.path_for(class_id);
        write_atomic(&path, persona.to_pretty_json().as_bytes())
            .map_err(|e| PersonaError::IoFailure(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn load(&self, class_id: u32) -> Result<Persona, PersonaError> {
        let path = self.path_for(class_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(PersonaError::NotFound(class_id))
            }
            Err(e) => return Err(PersonaError::IoFailure(format!("{}: {e}", path.display()))),
        };
        validate_persona(&text)
    }

    pub fn contains(&self, class_id: u32) -> bool {
        self.path_for(class_id).is_file()
    }

    /// Deletes a stored persona; missing documents are not an error.
    pub fn remove(&self, class_id: u32) -> Result<(), PersonaError> {
        match fs::remove_file(self.path_for(class_id)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(PersonaError::IoFailure(e.to_string())),
        }
    }
}
