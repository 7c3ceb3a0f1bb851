use serde::Serialize;

use super::{AudioClip, DialogueError};

/// Real-time factor: synthesis time over produced audio duration.
pub fn rtf(clip: &AudioClip) -> Result<f64, DialogueError> {
    if clip.samples.is_empty() {
        return Err(DialogueError::EmptyAudio);
    }
    Ok(rtf_from(clip.synth_ms, clip.duration_ms()))
}

pub fn rtf_from(synth_ms: f64, duration_ms: f64) -> f64 {
    synth_ms / duration_ms
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let sd = if count < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
        };
        Self { count, mean, sd }
    }
}
