//! First meeting with an object: frames → masks → boxes → dataset →
//! detector registration → persona. All or nothing.

use std::fs;
use std::sync::Arc;

use super::workspace::{ObjectProfile, ObjectRegistry, Workspace};
use super::SessionError;
use crate::backends::CapabilitySet;
use crate::clock::Clock;
use crate::dialogue::ChatHistory;
use crate::persona::{generate_persona, Language, Persona};
use crate::protocol::FrameSource;
use crate::vision::{
    build_dataset, collect_frames, mask_to_bbox, register_class, select_primary, write_annotations,
    AnnotatedSample, ModelHandle,
};

/// Frames gathered per acquaintance.
pub const ACQUAINT_FRAMES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct AcquaintOptions {
    pub language: Language,
    /// Defaults to `object<class_id>`.
    pub label: Option<String>,
    pub seed: u64,
    pub frames: usize,
}

impl AcquaintOptions {
    pub fn new(language: Language, seed: u64) -> Self {
        Self {
            language,
            label: None,
            seed,
            frames: ACQUAINT_FRAMES,
        }
    }

    pub fn label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Acquaintance {
    pub profile: ObjectProfile,
    pub persona: Persona,
    pub model: ModelHandle,
}

/// Runs a full acquaintance and commits it to `registry`, `model` and the
/// workspace. On any failure the registry, model and every file under the
/// workspace are left exactly as they were.
pub fn acquaint(
    source: &mut dyn FrameSource,
    caps: &CapabilitySet,
    workspace: &Workspace,
    registry: &mut ObjectRegistry,
    model: &mut Option<ModelHandle>,
    options: &AcquaintOptions,
    clock: &dyn Clock,
) -> Result<Acquaintance, SessionError> {
    let class_id = registry.next_class_id();
    let label = options
        .label
        .clone()
        .unwrap_or_else(|| format!("object{class_id}"));
    if registry.by_label(&label).is_some() {
        return Err(SessionError::CorruptWorkspace(format!("label `{label}` is already registered")));
    }

    let frames = collect_frames(source, options.frames)?;
    let mut samples = Vec::with_capacity(frames.len());
    let frames: Vec<Arc<_>> = frames.into_iter().map(Arc::new).collect();
    for frame in &frames {
        let candidates = caps.segmenter.segment(frame)?;
        let mask = select_primary(candidates).ok_or(SessionError::NoObject {
            sequence: frame.sequence,
        })?;
        samples.push(AnnotatedSample {
            frame: Arc::clone(frame),
            class_id,
            bbox: mask_to_bbox(&mask)?,
        });
    }
    let mut class_names = model.as_ref().map(|m| m.class_names.clone()).unwrap_or_default();
    class_names.push(label.clone());
    let dataset = build_dataset(samples, class_names, options.seed)?;

    let final_dir = workspace.dataset_dir(class_id);
    let staging = final_dir.with_file_name(format!(".staging-{class_id}"));
    let _ = fs::remove_dir_all(&staging);
    let snapshots = workspace.snapshot_for_acquaint(class_id)?;

    let attempt = (|| -> Result<Acquaintance, SessionError> {
        write_annotations(&dataset, &staging)?;
        let trained = register_class(dataset, caps.trainer.as_ref(), model.as_ref())?;
        let persona = generate_persona(Arc::clone(&frames[0]), options.language, caps.persona_generator.as_ref())?;

        let persona_path = workspace.personas.store(class_id, &persona)?;
        let history_path = workspace.histories.save(class_id, &ChatHistory::new())?;
        let rel = |p: &std::path::Path| p.strip_prefix(workspace.root()).unwrap_or(p).to_path_buf();
        let profile = ObjectProfile {
            class_id,
            label: label.clone(),
            persona_path: rel(&persona_path),
            history_path: rel(&history_path),
            registered_at_ms: clock.now_ms().max(0.0) as u64,
        };
        if final_dir.exists() {
            fs::remove_dir_all(&final_dir).map_err(|e| SessionError::Io(e.to_string()))?;
        }
        fs::rename(&staging, &final_dir).map_err(|e| SessionError::Io(e.to_string()))?;
        workspace.save_model(&trained)?;
        let mut next = registry.clone();
        next.profiles.insert(class_id, profile.clone());
        workspace.save_registry(&next)?;
        Ok(Acquaintance {
            profile,
            persona,
            model: trained,
        })
    })();

    match attempt {
        Ok(done) => {
            registry.profiles.insert(class_id, done.profile.clone());
            *model = Some(done.model.clone());
            Ok(done)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            let _ = fs::remove_dir_all(&final_dir);
            for s in &snapshots {
                let _ = s.restore();
            }
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::MockOptions;
    use crate::clock::VirtualClock;
    use crate::devsim::{run_scope, SceneScript};

    fn scope(sprite: &str, seed: u64) -> crate::devsim::VirtualScope {
        run_scope(SceneScript::single(sprite, 100, seed), seed).unwrap()
    }

    #[test]
    fn two_acquaintances_grow_the_model() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let caps = CapabilitySet::mock();
        let clock = VirtualClock::new();
        let (mut reg, mut model) = (ObjectRegistry::default(), None);
        let opts = AcquaintOptions::new(Language::En, 7).label("mug");
        let a = acquaint(&mut scope("mug", 1), &caps, &ws, &mut reg, &mut model, &opts, &clock).unwrap();
        assert_eq!((a.profile.class_id, reg.len()), (0, 1));
        assert_eq!(model.as_ref().unwrap().class_count(), 1);
        assert_eq!(ws.persona(0).unwrap(), a.persona);
        let ds = &model.as_ref().unwrap().lineage[0];
        assert_eq!((ds.train.len(), ds.val.len(), ds.test.len()), (70, 20, 10));

        let opts = AcquaintOptions::new(Language::En, 7).label("pumpkin");
        let b = acquaint(&mut scope("pumpkin", 2), &caps, &ws, &mut reg, &mut model, &opts, &clock).unwrap();
        assert_eq!(b.profile.class_id, 1);
        assert_eq!(model.as_ref().unwrap().class_names, ["mug", "pumpkin"]);
        assert_eq!(ws.load_registry().unwrap(), reg);
        let (saved, live) = (ws.load_model().unwrap().unwrap(), model.unwrap());
        assert_eq!((&saved.id, &saved.class_names, &saved.report), (&live.id, &live.class_names, &live.report));
        assert!(saved.artifact == live.artifact, "artifact changed on reload");
        let labels = |m: &ModelHandle| -> Vec<String> {
            m.lineage.iter().flat_map(|d| d.iter().map(|s| s.label_line())).collect()
        };
        assert_eq!(labels(&saved), labels(&live));
    }

    #[test]
    fn segmenter_failure_leaves_workspace_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::open(dir.path()).unwrap();
        let clock = VirtualClock::new();
        let (mut reg, mut model) = (ObjectRegistry::default(), None);
        let opts = AcquaintOptions::new(Language::En, 7).label("mug");
        acquaint(&mut scope("mug", 1), &CapabilitySet::mock(), &ws, &mut reg, &mut model, &opts, &clock).unwrap();
        let before = crate::testutil::tree_bytes(dir.path());
        let (reg0, model0) = (reg.clone(), model.clone());

        let failing = MockOptions {
            segment_fail_on: Some(50),
            ..MockOptions::default()
        }
        .build();
        let opts = AcquaintOptions::new(Language::En, 7).label("pumpkin");
        let err = acquaint(&mut scope("pumpkin", 2), &failing, &ws, &mut reg, &mut model, &opts, &clock);
        assert!(err.is_err());
        assert_eq!((reg, model), (reg0, model0));
        assert_eq!(crate::testutil::tree_bytes(dir.path()), before);
    }
}
