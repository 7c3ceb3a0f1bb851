//! Zero-mean normalized cross-correlation (ZNCC) template matching.
//!
//! The search runs on a three-level box-filtered pyramid (1/4, 1/2, full
//! resolution): every position is scored at 1/4 scale, the best few
//! candidates are refined at 1/2 scale and again at full scale. The reported
//! score is always the exact full-resolution ZNCC at the final position.

use serde::{Deserialize, Serialize};

use super::BBox;
use crate::protocol::ScopeFrame;

const COARSE_CANDIDATES: usize = 4;

/// An RGB8 exemplar of one class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub class_id: u32,
    pub width: u32,
    pub height: u32,
    #[serde(with = "b64_bytes")]
    pub rgb: Vec<u8>,
}

/// All templates of a trained model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateBank {
    pub templates: Vec<Template>,
}

/// Best template placement found in a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateMatch {
    pub class_id: u32,
    pub x: u32,
    pub y: u32,
    pub score: f64,
    pub bbox: BBox,
}

/// Single-channel-interleaved float image (3 values per pixel).
#[derive(Debug, Clone)]
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    fn from_rgb(width: usize, height: usize, rgb: &[u8]) -> Self {
        Self {
            width,
            height,
            data: rgb.iter().map(|&v| v as f32).collect(),
        }
    }

    /// 2x2 box filter; odd trailing rows/columns are dropped.
    fn half(&self) -> Self {
        let width = self.width / 2;
        let height = self.height / 2;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    let at = |xx: usize, yy: usize| self.data[(yy * self.width + xx) * 3 + c];
                    let sum = at(2 * x, 2 * y)
                        + at(2 * x + 1, 2 * y)
                        + at(2 * x, 2 * y + 1)
                        + at(2 * x + 1, 2 * y + 1);
                    data.push(sum * 0.25);
                }
            }
        }
        Self {
            width,
            height,
            data,
        }
    }
}

struct Pyramid {
    levels: [Plane; 3],
}

impl Pyramid {
    fn new(width: usize, height: usize, rgb: &[u8]) -> Self {
        let full = Plane::from_rgb(width, height, rgb);
        let half = full.half();
        let quarter = half.half();
        Self {
            levels: [full, half, quarter],
        }
    }
}

/// Precomputed template statistics at one pyramid level.
struct Kernel {
    width: usize,
    height: usize,
    centered: Vec<f32>,
    norm: f64,
}

impl Kernel {
    fn new(plane: &Plane) -> Self {
        let n = plane.data.len() as f64;
        let mean = plane.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let centered: Vec<f32> = plane.data.iter().map(|&v| (v as f64 - mean) as f32).collect();
        let norm = centered.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        Self {
            width: plane.width,
            height: plane.height,
            centered,
            norm,
        }
    }

    /// ZNCC of this kernel against `image` with the top-left corner at `(x, y)`.
    fn score(&self, image: &Plane, x: usize, y: usize) -> f64 {
        if self.norm == 0.0 {
            return 0.0;
        }
        let row_len = self.width * 3;
        let n = (self.width * self.height * 3) as f64;
        let mut sum = 0f64;
        let mut sum_sq = 0f64;
        let mut cross = 0f64;
        for row in 0..self.height {
            let start = ((y + row) * image.width + x) * 3;
            let window = &image.data[start..start + row_len];
            let kernel = &self.centered[row * row_len..(row + 1) * row_len];
            let (mut s, mut ss, mut c) = (0f32, 0f32, 0f32);
            for (w, k) in window.iter().zip(kernel) {
                s += w;
                ss += w * w;
                c += w * k;
            }
            sum += s as f64;
            sum_sq += ss as f64;
            cross += c as f64;
        }
        let var = sum_sq - sum * sum / n;
        if var <= 1e-9 {
            return 0.0;
        }
        // The kernel is zero-mean, so the window mean drops out of the cross term.
        (cross / (var.sqrt() * self.norm)).clamp(-1.0, 1.0)
    }
}

impl Template {
    pub fn new(class_id: u32, width: u32, height: u32, rgb: Vec<u8>) -> Self {
        assert_eq!(rgb.len(), (width * height * 3) as usize, "template buffer size");
        Self {
            class_id,
            width,
            height,
            rgb,
        }
    }
}

struct PreparedTemplate {
    class_id: u32,
    width: u32,
    height: u32,
    kernels: [Kernel; 3],
}

impl PreparedTemplate {
    fn new(t: &Template) -> Self {
        let p = Pyramid::new(t.width as usize, t.height as usize, &t.rgb);
        let [a, b, c] = &p.levels;
        Self {
            class_id: t.class_id,
            width: t.width,
            height: t.height,
            kernels: [Kernel::new(a), Kernel::new(b), Kernel::new(c)],
        }
    }
}

fn best_in_window(
    kernel: &Kernel,
    image: &Plane,
    cx: isize,
    cy: isize,
    radius: isize,
) -> Option<(usize, usize, f64)> {
    let max_x = image.width.checked_sub(kernel.width)? as isize;
    let max_y = image.height.checked_sub(kernel.height)? as isize;
    let mut best: Option<(usize, usize, f64)> = None;
    for y in (cy - radius).max(0)..=(cy + radius).min(max_y) {
        for x in (cx - radius).max(0)..=(cx + radius).min(max_x) {
            let s = kernel.score(image, x as usize, y as usize);
            if best.map_or(true, |b| s > b.2) {
                best = Some((x as usize, y as usize, s));
            }
        }
    }
    best
}

fn locate(t: &PreparedTemplate, pyramid: &Pyramid) -> Option<(u32, u32, f64)> {
    let [full, half, quarter] = &pyramid.levels;
    let [k_full, k_half, k_quarter] = &t.kernels;
    if k_quarter.width == 0 || k_quarter.height == 0 {
        // Tiny template: exhaustive search at full resolution.
        let (x, y, s) = best_in_window(k_full, full, 0, 0, full.width.max(full.height) as isize)?;
        return Some((x as u32, y as u32, s));
    }
    let max_x = quarter.width.checked_sub(k_quarter.width)?;
    let max_y = quarter.height.checked_sub(k_quarter.height)?;

    let mut coarse: Vec<(usize, usize, f64)> = Vec::with_capacity((max_x + 1) * (max_y + 1));
    for y in 0..=max_y {
        for x in 0..=max_x {
            coarse.push((x, y, k_quarter.score(quarter, x, y)));
        }
    }
    coarse.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));

    // Keep the strongest candidates that are not immediate neighbours.
    let mut seeds: Vec<(usize, usize)> = Vec::new();
    for (x, y, _) in coarse {
        if seeds.len() == COARSE_CANDIDATES {
            break;
        }
        if seeds
            .iter()
            .all(|&(sx, sy)| sx.abs_diff(x) > 2 || sy.abs_diff(y) > 2)
        {
            seeds.push((x, y));
        }
    }

    let mut best: Option<(u32, u32, f64)> = None;
    for (qx, qy) in seeds {
        let Some((hx, hy, _)) =
            best_in_window(k_half, half, 2 * qx as isize, 2 * qy as isize, 2)
        else {
            continue;
        };
        let Some((fx, fy, s)) = best_in_window(k_full, full, 2 * hx as isize, 2 * hy as isize, 2)
        else {
            continue;
        };
        if best.map_or(true, |b| s > b.2) {
            best = Some((fx as u32, fy as u32, s));
        }
    }
    best
}

impl TemplateBank {
    pub fn new(templates: Vec<Template>) -> Self {
        Self { templates }
    }

    pub fn class_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.templates.iter().map(|t| t.class_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Best placement per class, sorted by descending score.
    pub fn match_frame(&self, frame: &ScopeFrame) -> Vec<TemplateMatch> {
        let pyramid = Pyramid::new(frame.width as usize, frame.height as usize, &frame.pixels);
        let mut per_class: Vec<TemplateMatch> = Vec::new();
        for t in &self.templates {
            if t.width > frame.width || t.height > frame.height {
                continue;
            }
            let prepared = PreparedTemplate::new(t);
            let Some((x, y, score)) = locate(&prepared, &pyramid) else {
                continue;
            };
            let m = TemplateMatch {
                class_id: prepared.class_id,
                x,
                y,
                score,
                bbox: BBox::from_pixels(x, y, prepared.width, prepared.height, frame.width, frame.height),
            };
            match per_class.iter_mut().find(|p| p.class_id == m.class_id) {
                Some(existing) if existing.score < m.score => *existing = m,
                Some(_) => {}
                None => per_class.push(m),
            }
        }
        per_class.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.class_id.cmp(&b.class_id)));
        per_class
    }
}

/// Exact ZNCC between two equally sized RGB8 buffers.
pub fn zncc(a: &[u8], b: &[u8]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut cross, mut va, mut vb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let dx = x as f64 - ma;
        let dy = y as f64 - mb;
        cross += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cross / (va * vb).sqrt()
}

mod b64_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::imaging::b64_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        crate::imaging::b64_decode(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn checker(size: u32, cell: u32, a: [u8; 3], b: [u8; 3]) -> Vec<u8> {
        let mut out = Vec::new();
        for y in 0..size {
            for x in 0..size {
                let c = if ((x / cell) + (y / cell)) % 2 == 0 { a } else { b };
                out.extend_from_slice(&c);
            }
        }
        out
    }

    fn noise_frame(seed: u64) -> ScopeFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = ScopeFrame::filled(0, 320, 320, [0, 0, 0]);
        for p in f.pixels.iter_mut() {
            *p = rng.gen_range(90..160);
        }
        f
    }

    fn paste(frame: &mut ScopeFrame, x0: u32, y0: u32, size: u32, rgb: &[u8]) {
        for y in 0..size {
            for x in 0..size {
                let src = ((y * size + x) * 3) as usize;
                let dst = (((y0 + y) * frame.width + x0 + x) * 3) as usize;
                frame.pixels[dst..dst + 3].copy_from_slice(&rgb[src..src + 3]);
            }
        }
    }

    #[test]
    fn finds_pasted_template_exactly() {
        let sprite = checker(48, 8, [200, 40, 40], [40, 40, 200]);
        let mut frame = noise_frame(1);
        paste(&mut frame, 131, 77, 48, &sprite);
        let bank = TemplateBank::new(vec![Template::new(0, 48, 48, sprite.clone())]);
        let m = bank.match_frame(&frame);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].x, m[0].y), (131, 77));
        assert!(m[0].score > 0.999, "score {}", m[0].score);
        assert!((m[0].score - zncc(&frame.crop(131, 77, 48, 48), &sprite)).abs() < 1e-6);
    }

    #[test]
    fn noise_scores_low() {
        let sprite = checker(48, 8, [200, 40, 40], [40, 40, 200]);
        let bank = TemplateBank::new(vec![Template::new(0, 48, 48, sprite)]);
        for seed in 0..5 {
            let m = bank.match_frame(&noise_frame(seed));
            assert!(m[0].score < 0.5, "noise score {}", m[0].score);
        }
    }

    #[test]
    fn flat_regions_score_zero() {
        assert_eq!(zncc(&[5; 12], &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12]), 0.0);
    }

    #[test]
    fn bank_serializes() {
        let bank = TemplateBank::new(vec![Template::new(2, 2, 1, vec![1, 2, 3, 4, 5, 6])]);
        let json = serde_json::to_string(&bank).unwrap();
        let back: TemplateBank = serde_json::from_str(&json).unwrap();
        assert_eq!(back, bank);
    }
}
