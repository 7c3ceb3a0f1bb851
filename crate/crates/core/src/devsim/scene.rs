//! Scripted scenes rendered by the virtual scope.

use std::collections::HashMap;
use std::io;
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sprites::{builtin_sprite, Sprite};
use super::DevsimError;
use crate::protocol::{FrameError, FrameServer, FrameSource, ScopeFrame, DEVICE_FRAME_SIZE};

pub const DEFAULT_FPS: u32 = 20;
/// Flat grey used for occluders.
pub const OCCLUDER_RGB: [u8; 3] = [128, 128, 128];

fn default_fps() -> u32 {
    DEFAULT_FPS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    pub seed: u64,
}

/// Sprite top-left position at a given frame; positions between
/// keyframes are linearly interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub frame: u32,
    pub x: f64,
    pub y: f64,
}

/// Covers the left `fraction` of the sprite's columns on frames
/// `frames[0]..=frames[1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionSpan {
    pub frames: [u32; 2],
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub sprite: String,
    /// Inclusive frame range in which the sprite is visible.
    pub frames: [u32; 2],
    pub path: Vec<Keyframe>,
    /// Maximum per-frame random offset in pixels.
    #[serde(default)]
    pub jitter: u32,
    #[serde(default)]
    pub occlusion: Vec<OcclusionSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub duration_frames: u32,
    #[serde(default = "default_fps")]
    pub fps: u32,
    pub background: Background,
    #[serde(default)]
    pub placements: Vec<Placement>,
}

impl SceneScript {
    pub fn from_json(text: &str) -> Result<Self, DevsimError> {
        let script: Self =
            serde_json::from_str(text).map_err(|e| DevsimError::Script(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, DevsimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DevsimError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), DevsimError> {
        let err = |m: String| Err(DevsimError::Script(m));
        if self.fps == 0 {
            return err("fps must be positive".into());
        }
        for (i, p) in self.placements.iter().enumerate() {
            let [a, b] = p.frames;
            if a > b || b >= self.duration_frames {
                return err(format!("placement {i}: frame range {a}..={b} outside duration"));
            }
            if p.path.is_empty() {
                return err(format!("placement {i}: empty path"));
            }
            if p.path.windows(2).any(|w| w[1].frame < w[0].frame) {
                return err(format!("placement {i}: path keyframes out of order"));
            }
            for o in &p.occlusion {
                if !(0.0..=1.0).contains(&o.fraction) {
                    return err(format!("placement {i}: occlusion {} outside [0, 1]", o.fraction));
                }
                if o.frames[0] > o.frames[1] || o.frames[1] >= self.duration_frames {
                    return err(format!("placement {i}: occlusion range outside duration"));
                }
            }
        }
        Ok(())
    }

    /// Distinct sprite ids in first-appearance order.
    pub fn sprite_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut order: Vec<&Placement> = self.placements.iter().collect();
        order.sort_by_key(|p| p.frames[0]);
        for p in order {
            if !out.contains(&p.sprite) {
                out.push(p.sprite.clone());
            }
        }
        out
    }

    /// Sprites visible at `frame`.
    pub fn visible_at(&self, frame: u32) -> Vec<&str> {
        self.placements
            .iter()
            .filter(|p| (p.frames[0]..=p.frames[1]).contains(&frame))
            .map(|p| p.sprite.as_str())
            .collect()
    }

    pub fn frame_interval_ms(&self) -> f64 {
        1000.0 / self.fps as f64
    }

    /// Index of the frame on screen at virtual time `ms`.
    pub fn frame_at_ms(&self, ms: u64) -> u32 {
        (ms * self.fps as u64 / 1000) as u32
    }

    /// A single sprite sitting still (with jitter) near the frame center.
    pub fn single(sprite: &str, duration_frames: u32, seed: u64) -> Self {
        let c = (DEVICE_FRAME_SIZE / 2 - 24) as f64;
        Self {
            duration_frames,
            fps: DEFAULT_FPS,
            background: Background { seed },
            placements: vec![Placement {
                sprite: sprite.to_string(),
                frames: [0, duration_frames - 1],
                path: vec![Keyframe { frame: 0, x: c, y: c }],
                jitter: 3,
                occlusion: vec![],
            }],
        }
    }
}

impl Placement {
    fn position(&self, frame: u32) -> (f64, f64) {
        let path = &self.path;
        if frame <= path[0].frame {
            return (path[0].x, path[0].y);
        }
        for w in path.windows(2) {
            if frame <= w[1].frame {
                let span = (w[1].frame - w[0].frame).max(1) as f64;
                let t = (frame - w[0].frame) as f64 / span;
                return (w[0].x + t * (w[1].x - w[0].x), w[0].y + t * (w[1].y - w[0].y));
            }
        }
        let last = path[path.len() - 1];
        (last.x, last.y)
    }

    fn occlusion_at(&self, frame: u32) -> f64 {
        self.occlusion
            .iter()
            .filter(|o| (o.frames[0]..=o.frames[1]).contains(&frame))
            .map(|o| o.fraction)
            .fold(0.0, f64::max)
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Renders a [`SceneScript`] frame by frame.
#[derive(Debug, Clone)]
pub struct SceneRenderer {
    script: SceneScript,
    seed: u64,
    sprites: HashMap<String, Sprite>,
}

impl SceneRenderer {
    /// Resolves sprites from the built-in set.
    pub fn new(script: SceneScript, seed: u64) -> Result<Self, DevsimError> {
        Self::with_sprites(script, seed, |name| builtin_sprite(name))
    }

    /// Resolves sprites from fixture files in `dir`, falling back to the
    /// built-in set.
    pub fn with_fixture_dir(script: SceneScript, seed: u64, dir: &Path) -> Result<Self, DevsimError> {
        Self::with_sprites(script, seed, |name| {
            Sprite::load(dir, name).ok().or_else(|| builtin_sprite(name))
        })
    }

    fn with_sprites(
        script: SceneScript,
        seed: u64,
        resolve: impl Fn(&str) -> Option<Sprite>,
    ) -> Result<Self, DevsimError> {
        script.validate()?;
        let mut sprites = HashMap::new();
        for id in script.sprite_ids() {
            let sprite = resolve(&id).ok_or_else(|| DevsimError::UnknownSprite(id.clone()))?;
            sprites.insert(id, sprite);
        }
        Ok(Self {
            script,
            seed,
            sprites,
        })
    }

    pub fn script(&self) -> &SceneScript {
        &self.script
    }

    pub fn sprite(&self, id: &str) -> Option<&Sprite> {
        self.sprites.get(id)
    }

    pub fn len(&self) -> u32 {
        self.script.duration_frames
    }

    pub fn is_empty(&self) -> bool {
        self.script.duration_frames == 0
    }

    /// Renders frame `index`; identical `(script, seed, index)` always
    /// yields identical pixels.
    pub fn render(&self, index: u32) -> ScopeFrame {
        let n = DEVICE_FRAME_SIZE;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, self.script.background.seed, index as u64));
        let mut pixels = Vec::with_capacity((n * n * 3) as usize);
        for _ in 0..n * n {
            let base: i16 = rng.gen_range(96..160);
            for _ in 0..3 {
                pixels.push((base + rng.gen_range(-6i16..=6)) as u8);
            }
        }
        for (pi, p) in self.script.placements.iter().enumerate() {
            if !(p.frames[0]..=p.frames[1]).contains(&index) {
                continue;
            }
            let sprite = &self.sprites[&p.sprite];
            let (mut x, mut y) = p.position(index);
            if p.jitter > 0 {
                let mut jr = ChaCha8Rng::seed_from_u64(mix(self.seed, pi as u64 + 1, index as u64));
                let j = p.jitter as i64;
                x += jr.gen_range(-j..=j) as f64;
                y += jr.gen_range(-j..=j) as f64;
            }
            let (x0, y0) = (x.round() as i64, y.round() as i64);
            let cover = (p.occlusion_at(index) * sprite.width as f64).ceil() as u32;
            for sy in 0..sprite.height {
                for sx in 0..sprite.width {
                    let (fx, fy) = (x0 + sx as i64, y0 + sy as i64);
                    if fx < 0 || fy < 0 || fx >= n as i64 || fy >= n as i64 {
                        continue;
                    }
                    let rgb = if sx < cover { OCCLUDER_RGB } else { sprite.pixel(sx, sy) };
                    let i = ((fy as u32 * n + fx as u32) * 3) as usize;
                    pixels[i..i + 3].copy_from_slice(&rgb);
                }
            }
        }
        ScopeFrame {
            sequence: index,
            timestamp_ms: (index as u64 * 1000) / self.script.fps as u64,
            width: n,
            height: n,
            pixels,
        }
    }
}

/// Frame source replaying a scene once, front to back.
#[derive(Debug, Clone)]
pub struct VirtualScope {
    renderer: SceneRenderer,
    next: u32,
}

impl VirtualScope {
    pub fn new(renderer: SceneRenderer) -> Self {
        Self { renderer, next: 0 }
    }

    /// Continues from frame `start`.
    pub fn starting_at(renderer: SceneRenderer, start: u32) -> Self {
        Self {
            renderer,
            next: start,
        }
    }

    pub fn renderer(&self) -> &SceneRenderer {
        &self.renderer
    }
}

impl FrameSource for VirtualScope {
    fn next_frame(&mut self) -> Result<ScopeFrame, FrameError> {
        if self.next >= self.renderer.len() {
            return Err(FrameError::EndOfStream);
        }
        let frame = self.renderer.render(self.next);
        self.next += 1;
        Ok(frame)
    }
}

pub fn run_scope(script: SceneScript, seed: u64) -> Result<VirtualScope, DevsimError> {
    Ok(VirtualScope::new(SceneRenderer::new(script, seed)?))
}

/// Serves the scene over TCP at the script's frame rate.
pub fn serve_scope(renderer: SceneRenderer, bind: &str) -> io::Result<FrameServer> {
    let interval = Duration::from_secs_f64(renderer.script().frame_interval_ms() / 1000.0);
    let mut next = 0u32;
    FrameServer::spawn(bind, interval, move || {
        (next < renderer.len()).then(|| {
            let frame = renderer.render(next);
            next += 1;
            frame
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::mock::chroma;

    #[test]
    fn deterministic_frames() {
        let script = SceneScript::single("mug", 10, 3);
        let a = SceneRenderer::new(script.clone(), 1).unwrap();
        let b = SceneRenderer::new(script.clone(), 1).unwrap();
        assert_eq!(a.render(0), b.render(0));
        assert_ne!(a.render(0), SceneRenderer::new(script, 2).unwrap().render(0));
    }

    #[test]
    fn empty_scene_is_grey_noise() {
        let script = SceneScript {
            duration_frames: 3,
            fps: 20,
            background: Background { seed: 1 },
            placements: vec![],
        };
        let mut scope = run_scope(script, 0).unwrap();
        let f = scope.next_frame().unwrap();
        assert_eq!((f.width, f.height, f.sequence), (320, 320, 0));
        assert!(f.pixels.chunks_exact(3).all(|p| chroma([p[0], p[1], p[2]]) <= 12));
        scope.next_frame().unwrap();
        scope.next_frame().unwrap();
        assert_eq!(scope.next_frame(), Err(FrameError::EndOfStream));
    }

    #[test]
    fn sprite_is_pasted_and_occluded() {
        let mut script = SceneScript::single("mug", 5, 0);
        script.placements[0].jitter = 0;
        script.placements[0].occlusion = vec![OcclusionSpan { frames: [1, 1], fraction: 0.5 }];
        let r = SceneRenderer::new(script, 0).unwrap();
        let sprite = r.sprite("mug").unwrap().clone();
        let f0 = r.render(0);
        assert_eq!(f0.pixel(136, 136), sprite.pixel(0, 0));
        let f1 = r.render(1);
        assert_eq!(f1.pixel(136, 136), OCCLUDER_RGB);
        assert_eq!(f1.pixel(136 + 24, 136), sprite.pixel(24, 0));
    }

    #[test]
    fn path_interpolates() {
        let p = Placement {
            sprite: "mug".into(),
            frames: [0, 10],
            path: vec![Keyframe { frame: 0, x: 0.0, y: 0.0 }, Keyframe { frame: 10, x: 100.0, y: 50.0 }],
            jitter: 0,
            occlusion: vec![],
        };
        assert_eq!(p.position(5), (50.0, 25.0));
        assert_eq!(p.position(20), (100.0, 50.0));
    }

    #[test]
    fn validation_rejects_bad_scripts() {
        let mut s = SceneScript::single("mug", 10, 0);
        s.placements[0].frames = [0, 10];
        assert!(s.validate().is_err());
        let mut s = SceneScript::single("mug", 10, 0);
        s.placements[0].occlusion = vec![OcclusionSpan { frames: [0, 1], fraction: 1.5 }];
        assert!(s.validate().is_err());
        assert!(matches!(
            SceneRenderer::new(SceneScript::single("teapot", 10, 0), 0),
            Err(DevsimError::UnknownSprite(_))
        ));
        assert!(SceneScript::from_json(r#"{"duration_frames":1,"background":{"seed":1},"extra":1}"#).is_err());
    }
}
