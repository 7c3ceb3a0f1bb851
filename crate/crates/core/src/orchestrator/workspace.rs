//! On-disk session state.
//!
//! ```text
//! root/
//!   registry.json          object profiles
//!   model.json             current detector model
//!   personas/<id>.json
//!   history/<id>.json
//!   datasets/<id>/         annotated acquaintance frames
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::dialogue::HistoryStore;
use crate::fsutil::{write_atomic, FileSnapshot};
use crate::persona::{Persona, PersonaStore};
use crate::vision::{read_annotations, ModelArtifact, ModelHandle, TrainReport};

pub const REGISTRY_FILE: &str = "registry.json";
pub const MODEL_FILE: &str = "model.json";
pub const DATASETS_DIR: &str = "datasets";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectProfile {
    pub class_id: u32,
    pub label: String,
    /// Relative to the workspace root.
    pub persona_path: PathBuf,
    pub history_path: PathBuf,
    pub registered_at_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRegistry {
    pub profiles: BTreeMap<u32, ObjectProfile>,
    #[serde(default)]
    pub active: Option<u32>,
}

impl ObjectRegistry {
    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn contains(&self, class_id: u32) -> bool {
        self.profiles.contains_key(&class_id)
    }

    pub fn get(&self, class_id: u32) -> Option<&ObjectProfile> {
        self.profiles.get(&class_id)
    }

    pub fn by_label(&self, label: &str) -> Option<&ObjectProfile> {
        self.profiles.values().find(|p| p.label == label)
    }

    /// Class ids are dense and assigned in acquaintance order.
    pub fn next_class_id(&self) -> u32 {
        self.profiles.len() as u32
    }

    /// Sets the active object; it must be registered.
    pub fn set_active(&mut self, class_id: Option<u32>) -> Result<(), SessionError> {
        if let Some(c) = class_id {
            if !self.contains(c) {
                return Err(SessionError::UnknownProfile(c));
            }
        }
        self.active = class_id;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredModel {
    id: String,
    class_names: Vec<String>,
    artifact: ModelArtifact,
    report: TrainReport,
    /// Dataset directories, oldest first, relative to the root.
    lineage: Vec<PathBuf>,
}

/// Everything persisted under one root directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    pub personas: PersonaStore,
    pub histories: HistoryStore,
}

impl Workspace {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, SessionError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(|e| SessionError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self {
            personas: PersonaStore::new(&root),
            histories: HistoryStore::new(&root),
            root,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn registry_path(&self) -> PathBuf {
        self.root.join(REGISTRY_FILE)
    }

    pub fn model_path(&self) -> PathBuf {
        self.root.join(MODEL_FILE)
    }

    pub fn dataset_dir(&self, class_id: u32) -> PathBuf {
        self.root.join(DATASETS_DIR).join(class_id.to_string())
    }

    pub fn load_registry(&self) -> Result<ObjectRegistry, SessionError> {
        let path = self.registry_path();
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| SessionError::CorruptWorkspace(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(ObjectRegistry::default()),
            Err(e) => Err(SessionError::Io(format!("{}: {e}", path.display()))),
        }
    }

    pub fn save_registry(&self, registry: &ObjectRegistry) -> Result<(), SessionError> {
        let text = serde_json::to_string_pretty(registry).expect("registry serializes");
        write_atomic(&self.registry_path(), text.as_bytes()).map_err(|e| SessionError::Io(e.to_string()))
    }

    pub fn save_model(&self, model: &ModelHandle) -> Result<(), SessionError> {
        let lineage = (0..model.lineage.len() as u32)
            .map(|c| PathBuf::from(DATASETS_DIR).join(c.to_string()))
            .collect();
        let stored = StoredModel {
            id: model.id.clone(),
            class_names: model.class_names.clone(),
            artifact: model.artifact.clone(),
            report: model.report,
            lineage,
        };
        let text = serde_json::to_string(&stored).expect("model serializes");
        write_atomic(&self.model_path(), text.as_bytes()).map_err(|e| SessionError::Io(e.to_string()))
    }

    /// Loads the current model, re-reading its training datasets.
    pub fn load_model(&self) -> Result<Option<ModelHandle>, SessionError> {
        let path = self.model_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(SessionError::Io(format!("{}: {e}", path.display()))),
        };
        let stored: StoredModel = serde_json::from_str(&text)
            .map_err(|e| SessionError::CorruptWorkspace(format!("{}: {e}", path.display())))?;
        let lineage = stored
            .lineage
            .iter()
            .map(|rel| read_annotations(&self.root.join(rel)).map(Arc::new))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Some(ModelHandle {
            id: stored.id,
            class_names: stored.class_names,
            artifact: stored.artifact,
            report: stored.report,
            lineage,
        }))
    }

    pub fn persona(&self, class_id: u32) -> Result<Persona, SessionError> {
        Ok(self.personas.load(class_id)?)
    }

    /// Byte-level snapshots of every shared file an acquaintance touches.
    pub(crate) fn snapshot_for_acquaint(&self, class_id: u32) -> Result<Vec<FileSnapshot>, SessionError> {
        [
            self.registry_path(),
            self.model_path(),
            self.personas.path_for(class_id),
            self.histories.path_for(class_id),
        ]
        .iter()
        .map(|p| FileSnapshot::take(p).map_err(|e| SessionError::Io(e.to_string())))
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trip_and_active_invariant() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        assert!(ws.load_registry().unwrap().is_empty());
        let mut reg = ObjectRegistry::default();
        reg.profiles.insert(
            0,
            ObjectProfile {
                class_id: 0,
                label: "mug".into(),
                persona_path: "personas/0.json".into(),
                history_path: "history/0.json".into(),
                registered_at_ms: 5,
            },
        );
        assert!(reg.set_active(Some(1)).is_err());
        reg.set_active(Some(0)).unwrap();
        ws.save_registry(&reg).unwrap();
        assert_eq!(ws.load_registry().unwrap(), reg);
        assert_eq!(reg.next_class_id(), 1);
        assert_eq!(reg.by_label("mug").unwrap().class_id, 0);
        assert!(ws.load_model().unwrap().is_none());
    }
}
