//! Incremental class registration, per-frame detection and stream evaluation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BBox, Dataset, TemplateBank, VisionError};
use crate::backends::{Detector, TrainJob, Trainer};
use crate::clock::Clock;
use crate::dialogue::Summary;
use crate::protocol::{FrameSource, ScopeFrame};

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.75;
pub const TRAIN_EPOCHS: u32 = 100;
pub const TRAIN_PATIENCE: u32 = 25;
pub const STANDARD_EVAL_FRAMES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
    pub latency_ms: f64,
}

/// Trainer bookkeeping for one training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_budget: u32,
    pub patience: u32,
    pub epochs_run: u32,
    pub best_epoch: u32,
    pub early_stopped: bool,
}

/// Patience-based early stopping on a higher-is-better fitness value.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: u32,
    best: f64,
    best_epoch: u32,
}

impl EarlyStopping {
    pub fn new(patience: u32) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
        }
    }

    /// Records `fitness` for 1-based `epoch`; returns true when training
    /// should stop.
    pub fn observe(&mut self, epoch: u32, fitness: f64) -> bool {
        if fitness > self.best {
            self.best = fitness;
            self.best_epoch = epoch;
        }
        epoch - self.best_epoch >= self.patience
    }

    pub fn best_epoch(&self) -> u32 {
        self.best_epoch
    }

    /// Runs a full training schedule over `fitness(epoch)`.
    pub fn run(epoch_budget: u32, patience: u32, mut fitness: impl FnMut(u32) -> f64) -> TrainReport {
        let mut stopper = Self::new(patience);
        let mut epochs_run = 0;
        let mut early_stopped = false;
        for epoch in 1..=epoch_budget {
            epochs_run = epoch;
            if stopper.observe(epoch, fitness(epoch)) {
                early_stopped = epoch < epoch_budget;
                break;
            }
        }
        TrainReport {
            epoch_budget,
            patience,
            epochs_run,
            best_epoch: stopper.best_epoch(),
            early_stopped,
        }
    }
}

/// Backend-specific model weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelArtifact {
    Templates { bank: TemplateBank },
    Remote { model_id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelHandle {
    pub id: String,
    pub class_names: Vec<String>,
    pub artifact: ModelArtifact,
    pub report: TrainReport,
    /// Every dataset this model was trained on, oldest first.
    pub lineage: Vec<Arc<Dataset>>,
}

impl ModelHandle {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }
}

/// Trains a model covering `dataset.class_names`, starting from `prev` and
/// retraining over every cached dataset plus the new one.
pub fn register_class(
    dataset: Dataset,
    trainer: &dyn Trainer,
    prev: Option<&ModelHandle>,
) -> Result<ModelHandle, VisionError> {
    if dataset.class_names.is_empty() {
        return Err(VisionError::ClassListMismatch {
            previous: vec![],
            requested: vec![],
        });
    }
    if let Some(prev) = prev {
        if !dataset.class_names.starts_with(&prev.class_names) {
            return Err(VisionError::ClassListMismatch {
                previous: prev.class_names.clone(),
                requested: dataset.class_names.clone(),
            });
        }
    }
    let mut lineage = prev.map(|p| p.lineage.clone()).unwrap_or_default();
    let class_names = dataset.class_names.clone();
    lineage.push(Arc::new(dataset));
    let job = TrainJob {
        datasets: &lineage,
        class_names: &class_names,
        epochs: TRAIN_EPOCHS,
        patience: TRAIN_PATIENCE,
        pretrained: prev,
    };
    let trained = trainer
        .train(&job)
        .map_err(|e| VisionError::TrainerFailure(e.to_string()))?;
    let id = match &trained.artifact {
        ModelArtifact::Remote { model_id } => model_id.clone(),
        ModelArtifact::Templates { .. } => format!("templates-{}", class_names.len()),
    };
    Ok(ModelHandle {
        id,
        class_names,
        artifact: trained.artifact,
        report: trained.report,
        lineage,
    })
}

/// Detections in one frame plus the time the backend took.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionPass {
    pub detections: Vec<Detection>,
    pub latency_ms: f64,
}

impl DetectionPass {
    pub fn top(&self) -> Option<&Detection> {
        self.detections.first()
    }
}

pub fn detect_timed(
    frame: &ScopeFrame,
    model: &ModelHandle,
    threshold: f64,
    backend: &dyn Detector,
    clock: &dyn Clock,
) -> Result<DetectionPass, VisionError> {
    if model.class_names.is_empty() {
        return Err(VisionError::EmptyModel);
    }
    let started = clock.now_ms();
    let out = backend
        .detect(frame, model)
        .map_err(|e| VisionError::BackendFailure(e.to_string()))?;
    let latency_ms = out.compute_ms.unwrap_or_else(|| clock.now_ms() - started).max(0.0);
    let mut detections: Vec<Detection> = out
        .detections
        .into_iter()
        .filter(|d| d.confidence >= threshold && (d.class_id as usize) < model.class_names.len())
        .map(|d| Detection {
            confidence: d.confidence.clamp(0.0, 1.0),
            latency_ms,
            ..d
        })
        .collect();
    // Highest confidence first; ties go to the box nearest the frame center.
    detections.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.bbox.center_distance_sq().total_cmp(&b.bbox.center_distance_sq()))
            .then(a.class_id.cmp(&b.class_id))
    });
    Ok(DetectionPass {
        detections,
        latency_ms,
    })
}

/// Thresholded detections sorted by descending confidence.
pub fn detect(
    frame: &ScopeFrame,
    model: &ModelHandle,
    threshold: f64,
    backend: &dyn Detector,
    clock: &dyn Clock,
) -> Result<Vec<Detection>, VisionError> {
    detect_timed(frame, model, threshold, backend, clock).map(|p| p.detections)
}

/// Reads exactly `n` frames; a source that fails early discards the batch.
pub fn collect_frames(source: &mut dyn FrameSource, n: usize) -> Result<Vec<ScopeFrame>, VisionError> {
    if n == 0 {
        return Err(VisionError::TooFewSamples { needed: 1, got: 0 });
    }
    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        let frame = source
            .next_frame()
            .map_err(|e| VisionError::SourceLost(format!("after {} frames: {e}", frames.len())))?;
        frames.push(frame);
    }
    Ok(frames)
}

/// Continuous-detection statistics over a run of consecutive frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub truth_class: u32,
    pub class_name: String,
    pub frames_evaluated: usize,
    pub correct_frames: usize,
    /// Fraction of frames whose top detection is the true class.
    pub accuracy: f64,
    pub latency_ms: Summary,
    /// Over correct top detections (all of which clear the threshold).
    pub confidence: Summary,
    pub threshold: f64,
}

impl DetectionReport {
    /// Flat `key=value` lines.
    pub fn to_kv(&self) -> String {
        format!(
            "class_id={}\n\
             class_name={}\n\
             frames_evaluated={}\n\
             correct_frames={}\n\
             accuracy={:.6}\n\
             accuracy_pct={:.1}\n\
             average_time_ms={:.4}\n\
             sd_time_ms={:.4}\n\
             average_confidence={:.4}\n\
             sd_confidence={:.4}\n\
             confidence_threshold={:.2}\n",
            self.truth_class,
            self.class_name,
            self.frames_evaluated,
            self.correct_frames,
            self.accuracy,
            self.accuracy * 100.0,
            self.latency_ms.mean,
            self.latency_ms.sd,
            self.confidence.mean,
            self.confidence.sd,
            self.threshold,
        )
    }
}

pub fn evaluate_stream(
    source: &mut dyn FrameSource,
    model: &ModelHandle,
    truth: u32,
    n: usize,
    threshold: f64,
    backend: &dyn Detector,
    clock: &dyn Clock,
) -> Result<DetectionReport, VisionError> {
    if n == 0 {
        return Err(VisionError::TooFewSamples { needed: 1, got: 0 });
    }
    let class_name = model
        .class_names
        .get(truth as usize)
        .cloned()
        .ok_or(VisionError::UnknownClass(truth))?;
    let mut latencies = Vec::with_capacity(n);
    let mut confidences = Vec::with_capacity(n);
    let mut correct = 0;
    for i in 0..n {
        let frame = source
            .next_frame()
            .map_err(|e| VisionError::SourceLost(format!("after {i} frames: {e}")))?;
        let pass = detect_timed(&frame, model, threshold, backend, clock)?;
        latencies.push(pass.latency_ms);
        if let Some(top) = pass.top().filter(|d| d.class_id == truth) {
            correct += 1;
            confidences.push(top.confidence);
        }
    }
    Ok(DetectionReport {
        truth_class: truth,
        class_name,
        frames_evaluated: n,
        correct_frames: correct,
        accuracy: correct as f64 / n as f64,
        latency_ms: Summary::of(&latencies),
        confidence: Summary::of(&confidences),
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, DetectorOutput, TrainedModel};
    use crate::clock::VirtualClock;
    use crate::protocol::FrameError;
    use std::sync::Mutex;

    struct RecordingTrainer {
        jobs: Mutex<Vec<(usize, Vec<String>, u32, u32, bool)>>,
    }

    impl Trainer for RecordingTrainer {
        fn train(&self, job: &TrainJob<'_>) -> Result<TrainedModel, BackendError> {
            self.jobs.lock().unwrap().push((
                job.datasets.len(),
                job.class_names.to_vec(),
                job.epochs,
                job.patience,
                job.pretrained.is_some(),
            ));
            Ok(TrainedModel {
                artifact: ModelArtifact::Remote {
                    model_id: format!("m{}", job.class_names.len()),
                },
                report: EarlyStopping::run(job.epochs, job.patience, |_| 0.0),
            })
        }
    }

    fn dataset(names: &[&str]) -> Dataset {
        Dataset {
            train: vec![],
            val: vec![],
            test: vec![],
            class_names: names.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn early_stopping_schedule() {
        // Improves until epoch 35, then plateaus: stops 25 epochs later.
        let r = EarlyStopping::run(100, 25, |e| (e.min(35)) as f64);
        assert_eq!(r.best_epoch, 35);
        assert_eq!(r.epochs_run, 60);
        assert!(r.early_stopped);
        let r = EarlyStopping::run(100, 25, |e| e as f64);
        assert_eq!((r.epochs_run, r.early_stopped), (100, false));
    }

    #[test]
    fn registration_grows_class_list() {
        let trainer = RecordingTrainer { jobs: Mutex::new(vec![]) };
        let m1 = register_class(dataset(&["board"]), &trainer, None).unwrap();
        assert_eq!(m1.class_count(), 1);
        let mut prev = m1;
        let names = ["board", "pumpkin", "notebook", "plant", "ball", "figurine", "mug", "lipstick"];
        for k in 2..=8 {
            prev = register_class(dataset(&names[..k]), &trainer, Some(&prev)).unwrap();
        }
        assert_eq!(prev.class_count(), 8);
        assert_eq!(prev.lineage.len(), 8);
        let jobs = trainer.jobs.lock().unwrap();
        assert_eq!(jobs[0], (1, vec!["board".to_string()], 100, 25, false));
        assert_eq!(jobs[7].0, 8);
        assert!(jobs[7].4);
    }

    #[test]
    fn prefix_violation_rejected() {
        let trainer = RecordingTrainer { jobs: Mutex::new(vec![]) };
        let prev = register_class(dataset(&["A", "B"]), &trainer, None).unwrap();
        assert!(matches!(
            register_class(dataset(&["A", "C"]), &trainer, Some(&prev)),
            Err(VisionError::ClassListMismatch { .. })
        ));
    }

    struct Fixed(Vec<Detection>);

    impl Detector for Fixed {
        fn detect(&self, _: &ScopeFrame, _: &ModelHandle) -> Result<DetectorOutput, BackendError> {
            Ok(DetectorOutput {
                detections: self.0.clone(),
                compute_ms: None,
            })
        }
    }

    fn det(class_id: u32, confidence: f64, cx: f64) -> Detection {
        Detection {
            class_id,
            bbox: BBox::new(cx, 0.5, 0.1, 0.1).unwrap(),
            confidence,
            latency_ms: 0.0,
        }
    }

    fn model(n: usize) -> ModelHandle {
        ModelHandle {
            id: "m".into(),
            class_names: (0..n).map(|i| format!("c{i}")).collect(),
            artifact: ModelArtifact::Remote { model_id: "m".into() },
            report: EarlyStopping::run(1, 1, |_| 0.0),
            lineage: vec![],
        }
    }

    #[test]
    fn thresholding_and_ordering() {
        let backend = Fixed(vec![det(0, 0.8, 0.2), det(1, 0.95, 0.5), det(2, 0.8, 0.45), det(0, 0.5, 0.5)]);
        let clock = VirtualClock::new();
        let frame = ScopeFrame::filled(0, 4, 4, [0; 3]);
        let got = detect(&frame, &model(3), 0.75, &backend, &clock).unwrap();
        let order: Vec<u32> = got.iter().map(|d| d.class_id).collect();
        assert_eq!(order, vec![1, 2, 0]);
        assert!(detect(&frame, &model(3), 1.01, &backend, &clock).unwrap().is_empty());
        assert_eq!(detect(&frame, &model(0), 0.75, &backend, &clock), Err(VisionError::EmptyModel));
    }

    struct Frames(Vec<ScopeFrame>);

    impl FrameSource for Frames {
        fn next_frame(&mut self) -> Result<ScopeFrame, FrameError> {
            if self.0.is_empty() {
                Err(FrameError::EndOfStream)
            } else {
                Ok(self.0.remove(0))
            }
        }
    }

    #[test]
    fn collect_exact_or_lost() {
        let frames = |n| Frames((0..n).map(|i| ScopeFrame::filled(i, 2, 2, [0; 3])).collect());
        assert_eq!(collect_frames(&mut frames(5), 1).unwrap().len(), 1);
        let got = collect_frames(&mut frames(100), 100).unwrap();
        assert!(got.windows(2).all(|w| w[1].sequence > w[0].sequence));
        assert!(matches!(collect_frames(&mut frames(40), 100), Err(VisionError::SourceLost(_))));
        assert!(matches!(collect_frames(&mut frames(1), 0), Err(VisionError::TooFewSamples { .. })));
    }

    #[test]
    fn evaluation_counts_top_detection() {
        let backend = Fixed(vec![det(1, 0.9, 0.5)]);
        let clock = VirtualClock::new();
        let mut src = Frames((0..10).map(|i| ScopeFrame::filled(i, 2, 2, [0; 3])).collect());
        let r = evaluate_stream(&mut src, &model(2), 1, 10, 0.75, &backend, &clock).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!((r.confidence.mean - 0.9).abs() < 1e-12);
        assert!(r.to_kv().contains("frames_evaluated=10\n"));
        let mut src = Frames(vec![]);
        assert!(matches!(
            evaluate_stream(&mut src, &model(2), 1, 0, 0.75, &backend, &clock),
            Err(VisionError::TooFewSamples { .. })
        ));
    }
}
