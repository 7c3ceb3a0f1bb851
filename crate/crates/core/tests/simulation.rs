use std::path::{Path, PathBuf};
use std::sync::Arc;

use talkspell::backends::CapabilitySet;
use talkspell::clock::VirtualClock;
use talkspell::devsim::{SceneRenderer, SceneScript, VirtualScope, WandScript};
use talkspell::orchestrator::{simulate, AcquaintOptions, Session, SessionConfig};
use talkspell::persona::Language;
use talkspell::vision::{evaluate_stream, STANDARD_EVAL_FRAMES};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

#[test]
fn two_cycle_session_on_mocks() {
    let scene = SceneScript::load(&fixture("scenes/mug.json")).unwrap();
    let wand = WandScript::load(&fixture("wand/2cycles.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (root, out) = (dir.path().join("root"), dir.path().join("out"));
    let report = simulate(&scene, &wand, 7, CapabilitySet::mock(), &root, &out, SessionConfig::default()).unwrap();
    println!("{}\n{}", report.transcript, report.metrics);
    assert_eq!(report.cycles.len(), 2);
    assert_eq!(report.acquainted, ["mug"]);
    for c in &report.cycles {
        assert!((c.total_rtf - 0.6).abs() < 1e-6);
    }
}

#[test]
fn occluded_stream_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(VirtualClock::new());
    let mut session = Session::open(dir.path(), CapabilitySet::mock(), clock.clone(), SessionConfig::default()).unwrap();
    let clip = SceneScript::single("mug", 100, 7);
    session
        .acquaint(
            &mut VirtualScope::new(SceneRenderer::new(clip, 7).unwrap()),
            &AcquaintOptions::new(Language::En, 7).label("mug"),
        )
        .unwrap();
    let scene = SceneScript::load(&fixture("scenes/mug_occluded.json")).unwrap();
    let mut scope = VirtualScope::new(SceneRenderer::new(scene, 7).unwrap());
    let model = session.model().unwrap();
    let report = evaluate_stream(
        &mut scope,
        model,
        0,
        STANDARD_EVAL_FRAMES,
        session.config().confidence_threshold,
        session.capabilities().detector.as_ref(),
        clock.as_ref(),
    )
    .unwrap();
    println!("{}", report.to_kv());
    assert!(report.accuracy >= 0.9);
}
