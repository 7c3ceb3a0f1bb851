use crate::backends::{
    BackendError, Detector, DetectorOutput, Segmenter, TrainJob, TrainedModel, Trainer,
};
use crate::protocol::ScopeFrame;
use crate::vision::{
    Detection, EarlyStopping, Mask, MaskCandidate, ModelArtifact, ModelHandle, Template,
    TemplateBank,
};

/// Pixels whose channel spread exceeds this count as object pixels.
pub const SALIENT_CHROMA: u8 = 40;
const MIN_COMPONENT_AREA: usize = 16;
const MAX_TEMPLATE_CROPS: usize = 15;

pub fn chroma(rgb: [u8; 3]) -> u8 {
    let max = rgb.iter().max().unwrap();
    let min = rgb.iter().min().unwrap();
    max - min
}

/// Saturation threshold followed by 4-connected components. Saliency is the
/// component's share of the frame.
#[derive(Debug, Clone, Default)]
pub struct MockSegmenter {
    pub fail_on: Option<u32>,
}

impl Segmenter for MockSegmenter {
    fn segment(&self, frame: &ScopeFrame) -> Result<Vec<MaskCandidate>, BackendError> {
        if self.fail_on == Some(frame.sequence) {
            return Err(BackendError::Failed(format!("segmenter failed on frame {}", frame.sequence)));
        }
        let (w, h) = (frame.width as usize, frame.height as usize);
        let salient: Vec<bool> = frame
            .pixels
            .chunks_exact(3)
            .map(|p| chroma([p[0], p[1], p[2]]) > SALIENT_CHROMA)
            .collect();
        let mut label = vec![0u32; w * h];
        let mut next = 0u32;
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..w * h {
            if !salient[start] || label[start] != 0 {
                continue;
            }
            next += 1;
            label[start] = next;
            stack.push(start);
            let mut members = Vec::new();
            while let Some(i) = stack.pop() {
                members.push(i);
                let (x, y) = (i % w, i / w);
                let mut visit = |j: usize| {
                    if salient[j] && label[j] == 0 {
                        label[j] = next;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            if members.len() < MIN_COMPONENT_AREA {
                continue;
            }
            let mut mask = Mask::empty(frame.width, frame.height);
            for &i in &members {
                mask.bits[i] = true;
            }
            out.push(MaskCandidate {
                saliency: members.len() as f64 / (w * h) as f64,
                mask,
            });
        }
        Ok(out)
    }
}

/// Builds one template per class: the per-pixel median over up to 15
/// training crops of the most common crop size.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTrainer;

impl Trainer for MockTrainer {
    fn train(&self, job: &TrainJob<'_>) -> Result<TrainedModel, BackendError> {
        let mut templates = Vec::with_capacity(job.class_names.len());
        for class_id in 0..job.class_names.len() as u32 {
            let crops: Vec<(u32, u32, Vec<u8>)> = job
                .datasets
                .iter()
                .flat_map(|d| d.train.iter())
                .filter(|s| s.class_id == class_id)
                .map(|s| {
                    let (x, y, w, h) = s.bbox.to_pixels(s.frame.width, s.frame.height);
                    (w, h, s.frame.crop(x, y, w, h))
                })
                .collect();
            if crops.is_empty() {
                return Err(BackendError::Failed(format!(
                    "no training samples for class {class_id} ({})",
                    job.class_names[class_id as usize]
                )));
            }
            templates.push(median_template(class_id, &crops));
        }
        let tau = 6.0 + 2.0 * job.class_names.len() as f64;
        let report = EarlyStopping::run(job.epochs, job.patience, |e| {
            ((1.0 - (-(e as f64) / tau).exp()) * 1000.0).round() / 1000.0
        });
        Ok(TrainedModel {
            artifact: ModelArtifact::Templates {
                bank: TemplateBank::new(templates),
            },
            report,
        })
    }
}

fn median_template(class_id: u32, crops: &[(u32, u32, Vec<u8>)]) -> Template {
    let mut sizes: Vec<(u32, u32)> = crops.iter().map(|c| (c.0, c.1)).collect();
    sizes.sort_unstable();
    let mut modal = sizes[0];
    let mut best_run = 0;
    for run in sizes.chunk_by(|a, b| a == b) {
        if run.len() > best_run {
            best_run = run.len();
            modal = run[0];
        }
    }
    let same: Vec<&Vec<u8>> = crops
        .iter()
        .filter(|c| (c.0, c.1) == modal)
        .map(|c| &c.2)
        .collect();
    let step = same.len().div_ceil(MAX_TEMPLATE_CROPS);
    let picked: Vec<&Vec<u8>> = same.into_iter().step_by(step).collect();
    let len = picked[0].len();
    let mut column = Vec::with_capacity(picked.len());
    let rgb = (0..len)
        .map(|i| {
            column.clear();
            column.extend(picked.iter().map(|c| c[i]));
            column.sort_unstable();
            column[column.len() / 2]
        })
        .collect();
    Template::new(class_id, modal.0, modal.1, rgb)
}

/// Template matching against every registered class; confidence is the
/// ZNCC score, clamped at zero.
pub fn mock_detector_match(frame: &ScopeFrame, templates: &TemplateBank) -> Vec<Detection> {
    templates
        .match_frame(frame)
        .into_iter()
        .map(|m| Detection {
            class_id: m.class_id,
            bbox: m.bbox,
            confidence: m.score.clamp(0.0, 1.0),
            latency_ms: 0.0,
        })
        .collect()
}

/// Reports a modelled latency so evaluation reports are reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockDetector;

impl MockDetector {
    pub fn modelled_latency_ms(frame: &ScopeFrame, classes: usize) -> f64 {
        let jitter = (frame.sequence.wrapping_mul(2_654_435_761) % 1000) as f64 / 1000.0;
        11.0 + 0.25 * classes as f64 + 1.5 * jitter
    }
}

impl Detector for MockDetector {
    fn detect(&self, frame: &ScopeFrame, model: &ModelHandle) -> Result<DetectorOutput, BackendError> {
        let ModelArtifact::Templates { bank } = &model.artifact else {
            return Err(BackendError::Unsupported("mock detector needs a template model".into()));
        };
        Ok(DetectorOutput {
            detections: mock_detector_match(frame, bank),
            compute_ms: Some(Self::modelled_latency_ms(frame, model.class_names.len())),
        })
    }
}
