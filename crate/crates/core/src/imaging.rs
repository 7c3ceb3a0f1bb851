//! PNG and base64 helpers for shipping frames to disk and over HTTP.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{ImageFormat, RgbImage};

use crate::protocol::ScopeFrame;

pub fn encode_png(frame: &ScopeFrame) -> Result<Vec<u8>, image::ImageError> {
    let img = RgbImage::from_raw(frame.width, frame.height, frame.pixels.clone())
        .expect("validated frame buffer");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn decode_png(bytes: &[u8], sequence: u32) -> Result<ScopeFrame, image::ImageError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
    let (width, height) = img.dimensions();
    Ok(ScopeFrame {
        sequence,
        timestamp_ms: 0,
        width,
        height,
        pixels: img.into_raw(),
    })
}

pub fn frame_to_b64(frame: &ScopeFrame) -> Result<String, image::ImageError> {
    Ok(STANDARD.encode(encode_png(frame)?))
}

pub fn frame_from_b64(text: &str, sequence: u32) -> Result<ScopeFrame, String> {
    let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
    decode_png(&bytes, sequence).map_err(|e| e.to_string())
}

pub fn b64_encode(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn b64_decode(text: &str) -> Result<Vec<u8>, String> {
    STANDARD.decode(text).map_err(|e| e.to_string())
}
