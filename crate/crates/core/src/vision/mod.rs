//! Visual pipeline: masks and boxes, dataset construction, template
//! matching, class registration and detection.

mod dataset;
mod detect;
mod mask;
mod template;

use thiserror::Error;

pub use dataset::{
    build_dataset, parse_label_line, read_annotations, split_sizes, write_annotations, AnnotatedSample, AnnotationManifest, Dataset,
    SplitSizes, CLASSES_FILE, MIN_DATASET_SAMPLES,
};
pub use detect::{
    collect_frames, detect, detect_timed, evaluate_stream, register_class, Detection,
    DetectionPass, DetectionReport, EarlyStopping, ModelArtifact, ModelHandle, TrainReport,
    DEFAULT_CONFIDENCE_THRESHOLD, STANDARD_EVAL_FRAMES, TRAIN_EPOCHS, TRAIN_PATIENCE,
};
pub use mask::{mask_to_bbox, select_primary, BBox, Mask, MaskCandidate};
pub use template::{zncc, Template, TemplateBank, TemplateMatch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisionError {
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("bounding box outside the unit square: {0:?}")]
    InvalidBox(BBox),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("class id {0} is not registered")]
    UnknownClass(u32),
    #[error("I/O failure: {0}")]
    IoFailure(String),
    #[error("trainer failed: {0}")]
    TrainerFailure(String),
    #[error("class list {requested:?} does not extend {previous:?}")]
    ClassListMismatch {
        previous: Vec<String>,
        requested: Vec<String>,
    },
    #[error("detector failed: {0}")]
    BackendFailure(String),
    #[error("model has no classes")]
    EmptyModel,
    #[error("frame source lost: {0}")]
    SourceLost(String),
}
