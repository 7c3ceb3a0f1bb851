//! Procedural object sprites and their raw fixture format.
//!
//! Fixture files are `width: u16 BE`, `height: u16 BE`, then RGB8 rows.

use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SPRITE_SIZE: u32 = 48;

/// The eight built-in object categories.
pub const SPRITE_NAMES: [&str; 8] = [
    "paint_board",
    "pumpkin",
    "notebook",
    "plant",
    "tennis_ball",
    "figurine",
    "mug",
    "lipstick",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sprite {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl Sprite {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn to_fixture_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.rgb.len());
        out.extend_from_slice(&(self.width as u16).to_be_bytes());
        out.extend_from_slice(&(self.height as u16).to_be_bytes());
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn from_fixture_bytes(name: &str, bytes: &[u8]) -> io::Result<Self> {
        let invalid = |m: &str| io::Error::new(io::ErrorKind::InvalidData, format!("{name}: {m}"));
        if bytes.len() < 4 {
            return Err(invalid("missing header"));
        }
        let width = u16::from_be_bytes([bytes[0], bytes[1]]) as u32;
        let height = u16::from_be_bytes([bytes[2], bytes[3]]) as u32;
        if width == 0 || height == 0 || bytes.len() != 4 + (width * height * 3) as usize {
            return Err(invalid("size does not match header"));
        }
        Ok(Self {
            name: name.to_string(),
            width,
            height,
            rgb: bytes[4..].to_vec(),
        })
    }

    /// Loads `<dir>/<name>.rgb`.
    pub fn load(dir: &Path, name: &str) -> io::Result<Self> {
        Self::from_fixture_bytes(name, &fs::read(dir.join(format!("{name}.rgb")))?)
    }
}

fn hsv(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r, g, b].map(|u| ((u + m) * 255.0).round() as u8)
}

/// Base hue, texture seed and spatial pattern in `[-1, 1]` for each
/// category. The pattern picks between the base hue and its near-complement
/// and modulates brightness, so sprites differ in layout and not just tint.
fn style(name: &str) -> Option<(f64, u64, fn(f64, f64) -> f64)> {
    use std::f64::consts::PI;
    Some(match name {
        "paint_board" => (0.0, 11, |x, y| if (x < 0.5) ^ (y < 0.5) { 1.0 } else { -1.0 }),
        "pumpkin" => (25.0, 12, |x, _| (x * 6.0 * PI).cos()),
        "notebook" => (220.0, 13, |_, y| if (y * 12.0) as u32 % 2 == 0 { 1.0 } else { -1.0 }),
        "plant" => (125.0, 14, |x, y| if ((x + y) * 8.0) as u32 % 2 == 0 { 1.0 } else { -1.0 }),
        "tennis_ball" => (70.0, 15, |x, y| {
            let d = ((x - 0.5).powi(2) + (y - 0.1).powi(2)).sqrt();
            if (d - 0.55).abs() < 0.08 { -1.0 } else { 1.0 }
        }),
        "figurine" => (295.0, 16, |x, y| {
            if ((x * 6.0) as u32 + (y * 6.0) as u32) % 2 == 0 { 1.0 } else { -1.0 }
        }),
        "mug" => (190.0, 17, |x, y| {
            let d = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
            (d * 20.0).sin()
        }),
        "lipstick" => (350.0, 18, |x, y| ((y - 0.5) * 4.0 + (x * 3.0 * PI).sin()).clamp(-1.0, 1.0)),
        _ => return None,
    })
}

/// Renders a built-in sprite. Every pixel is strongly saturated so the
/// sprite stands out from the grey background noise.
pub fn builtin_sprite(name: &str) -> Option<Sprite> {
    let (hue, seed, pattern) = style(name)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = SPRITE_SIZE;
    let mut rgb = Vec::with_capacity((n * n * 3) as usize);
    for y in 0..n {
        for x in 0..n {
            let (u, v) = ((x as f64 + 0.5) / n as f64, (y as f64 + 0.5) / n as f64);
            let p = pattern(u, v);
            let base = if p >= 0.0 { hue } else { hue + 150.0 };
            let h = base + rng.gen_range(-40.0..40.0);
            let s = rng.gen_range(0.75..1.0);
            let val = (0.72 + 0.2 * p + rng.gen_range(-0.15..0.15)).clamp(0.5, 1.0);
            rgb.extend_from_slice(&hsv(h, s, val));
        }
    }
    Some(Sprite {
        name: name.to_string(),
        width: n,
        height: n,
        rgb,
    })
}

pub fn builtin_sprites() -> Vec<Sprite> {
    SPRITE_NAMES.iter().map(|n| builtin_sprite(n).unwrap()).collect()
}

/// Writes every built-in sprite to `<dir>/<name>.rgb`.
pub fn write_fixtures(dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for sprite in builtin_sprites() {
        fs::write(dir.join(format!("{}.rgb", sprite.name)), sprite.to_fixture_bytes())?;
    }
    Ok(())
}
