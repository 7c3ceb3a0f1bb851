//! 16 kHz mono PCM16 WAV files.
//!
//! Recordings from the simulated microphone carry the spoken text in an extra
//! RIFF chunk (`utxt`, UTF-8). Standard players skip unknown chunks; the mock
//! transcriber reads it back verbatim.

use thiserror::Error;

pub const SAMPLE_RATE: u32 = 16_000;
pub const TEXT_CHUNK_ID: &[u8; 4] = b"utxt";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WavError {
    #[error("not a RIFF/WAVE file")]
    NotWave,
    #[error("truncated WAV data")]
    Truncated,
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("missing `{0}` chunk")]
    MissingChunk(&'static str),
    #[error("text chunk is not UTF-8")]
    BadText,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Wav {
    pub samples: Vec<i16>,
    pub text: Option<String>,
}

impl Wav {
    pub fn duration_ms(&self) -> f64 {
        samples_to_ms(self.samples.len())
    }
}

pub fn samples_to_ms(samples: usize) -> f64 {
    samples as f64 / SAMPLE_RATE as f64 * 1000.0
}

pub fn ms_to_samples(ms: u64) -> usize {
    (ms * SAMPLE_RATE as u64 / 1000) as usize
}

fn push_chunk(out: &mut Vec<u8>, id: &[u8; 4], body: &[u8]) {
    out.extend_from_slice(id);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(body);
    if body.len() % 2 == 1 {
        out.push(0);
    }
}

pub fn encode_wav(samples: &[i16], text: Option<&str>) -> Vec<u8> {
    let mut fmt = Vec::with_capacity(16);
    fmt.extend_from_slice(&1u16.to_le_bytes()); // PCM
    fmt.extend_from_slice(&1u16.to_le_bytes()); // mono
    fmt.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    fmt.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    fmt.extend_from_slice(&2u16.to_le_bytes());
    fmt.extend_from_slice(&16u16.to_le_bytes());

    let mut body = Vec::with_capacity(samples.len() * 2 + 64);
    body.extend_from_slice(b"WAVE");
    push_chunk(&mut body, b"fmt ", &fmt);
    if let Some(text) = text {
        push_chunk(&mut body, TEXT_CHUNK_ID, text.as_bytes());
    }
    let data: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
    push_chunk(&mut body, b"data", &data);

    let mut out = Vec::with_capacity(body.len() + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn decode_wav(bytes: &[u8]) -> Result<Wav, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::NotWave);
    }
    let mut pos = 12;
    let mut saw_fmt = false;
    let mut samples = None;
    let mut text = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let start = pos + 8;
        let end = start.checked_add(len).ok_or(WavError::Truncated)?;
        if end > bytes.len() {
            return Err(WavError::Truncated);
        }
        let body = &bytes[start..end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(WavError::Truncated);
                }
                let format = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes([body[14], body[15]]);
                if format != 1 || channels != 1 || rate != SAMPLE_RATE || bits != 16 {
                    return Err(WavError::Unsupported(format!(
                        "format {format}, {channels} ch, {rate} Hz, {bits} bit"
                    )));
                }
                saw_fmt = true;
            }
            b"data" => {
                samples = Some(
                    body.chunks_exact(2)
                        .map(|c| i16::from_le_bytes([c[0], c[1]]))
                        .collect(),
                );
            }
            id if id == TEXT_CHUNK_ID => {
                text = Some(String::from_utf8(body.to_vec()).map_err(|_| WavError::BadText)?);
            }
            _ => {}
        }
        pos = end + (len % 2);
    }
    if !saw_fmt {
        return Err(WavError::MissingChunk("fmt "));
    }
    Ok(Wav {
        samples: samples.ok_or(WavError::MissingChunk("data"))?,
        text,
    })
}

/// Deterministic sine: 7th-order odd polynomial after range reduction to
/// [-pi/2, pi/2]. Only IEEE basic arithmetic, so output is bit-identical on
/// every platform (unlike libm `sin`).
pub fn portable_sin(x: f64) -> f64 {
    use std::f64::consts::{FRAC_PI_2, PI, TAU};
    let mut r = x % TAU;
    if r > PI {
        r -= TAU;
    } else if r < -PI {
        r += TAU;
    }
    if r > FRAC_PI_2 {
        r = PI - r;
    } else if r < -FRAC_PI_2 {
        r = -PI - r;
    }
    let r2 = r * r;
    // Taylor terms through x^11; error < 6e-8 on [-pi/2, pi/2].
    r * (1.0
        - r2 / 6.0
            * (1.0 - r2 / 20.0 * (1.0 - r2 / 42.0 * (1.0 - r2 / 72.0 * (1.0 - r2 / 110.0)))))
}

/// `count` samples of a sine tone at `freq_hz`.
pub fn tone(freq_hz: f64, count: usize, amplitude: i16) -> Vec<i16> {
    let step = std::f64::consts::TAU * freq_hz / SAMPLE_RATE as f64;
    (0..count)
        .map(|n| (portable_sin(step * n as f64) * amplitude as f64).round() as i16)
        .collect()
}

/// Estimates the dominant frequency by counting upward zero crossings.
pub fn estimate_frequency(samples: &[i16]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let crossings = samples
        .windows(2)
        .filter(|w| w[0] < 0 && w[1] >= 0)
        .count();
    crossings as f64 / samples_to_ms(samples.len()) * 1000.0
}
