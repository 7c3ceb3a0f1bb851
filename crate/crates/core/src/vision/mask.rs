use serde::{Deserialize, Serialize};

use super::VisionError;

/// Binary object mask aligned with its source frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    /// Row-major, `width * height` entries.
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; (width * height) as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; (width * height) as usize],
        }
    }

    /// Mask with the inclusive rectangle `[x0, x1] x [y0, y1]` set.
    pub fn rect(width: u32, height: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        let mut m = Self::empty(width, height);
        for y in y0..=y1 {
            for x in x0..=x1 {
                m.set(x, y, true);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[(y * self.width + x) as usize] = v;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Mean `(x, y)` of the set pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0f64, 0f64, 0usize);
        for (i, _) in self.bits.iter().enumerate().filter(|(_, b)| **b) {
            sx += (i as u32 % self.width) as f64;
            sy += (i as u32 / self.width) as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }
}

/// Center-format bounding box normalized to the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    const EPS: f64 = 1e-9;

    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, VisionError> {
        let b = Self { cx, cy, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(VisionError::InvalidBox(b))
        }
    }

    /// Box covering pixel columns `x0..x0+w` and rows `y0..y0+h` of a
    /// `frame_w` x `frame_h` image.
    pub fn from_pixels(x0: u32, y0: u32, w: u32, h: u32, frame_w: u32, frame_h: u32) -> Self {
        let fw = frame_w as f64;
        let fh = frame_h as f64;
        Self {
            cx: (x0 as f64 + w as f64 / 2.0) / fw,
            cy: (y0 as f64 + h as f64 / 2.0) / fh,
            w: w as f64 / fw,
            h: h as f64 / fh,
        }
    }

    pub fn is_valid(&self) -> bool {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        in_unit(self.cx)
            && in_unit(self.cy)
            && self.w > 0.0
            && self.w <= 1.0
            && self.h > 0.0
            && self.h <= 1.0
            && self.cx - self.w / 2.0 >= -Self::EPS
            && self.cx + self.w / 2.0 <= 1.0 + Self::EPS
            && self.cy - self.h / 2.0 >= -Self::EPS
            && self.cy + self.h / 2.0 <= 1.0 + Self::EPS
    }

    /// Pixel rectangle `(x0, y0, w, h)` in a `frame_w` x `frame_h` image.
    pub fn to_pixels(&self, frame_w: u32, frame_h: u32) -> (u32, u32, u32, u32) {
        let fw = frame_w as f64;
        let fh = frame_h as f64;
        let x0 = ((self.cx - self.w / 2.0) * fw).round().max(0.0) as u32;
        let y0 = ((self.cy - self.h / 2.0) * fh).round().max(0.0) as u32;
        let w = ((self.w * fw).round() as u32).clamp(1, frame_w - x0.min(frame_w - 1));
        let h = ((self.h * fh).round() as u32).clamp(1, frame_h - y0.min(frame_h - 1));
        (x0, y0, w, h)
    }

    /// Squared distance from the box center to the frame center.
    pub fn center_distance_sq(&self) -> f64 {
        (self.cx - 0.5).powi(2) + (self.cy - 0.5).powi(2)
    }
}

/// Smallest normalized box containing every set pixel of `mask`.
pub fn mask_to_bbox(mask: &Mask) -> Result<BBox, VisionError> {
    let mut min_x = u32::MAX;
    let mut min_y = u32::MAX;
    let mut max_x = 0;
    let mut max_y = 0;
    for y in 0..mask.height {
        let row = &mask.bits[(y * mask.width) as usize..((y + 1) * mask.width) as usize];
        let (Some(first), Some(last)) = (row.iter().position(|b| *b), row.iter().rposition(|b| *b))
        else {
            continue;
        };
        min_x = min_x.min(first as u32);
        max_x = max_x.max(last as u32);
        min_y = min_y.min(y);
        max_y = y;
    }
    if min_x == u32::MAX {
        return Err(VisionError::EmptyMask);
    }
    Ok(BBox::from_pixels(
        min_x,
        min_y,
        max_x - min_x + 1,
        max_y - min_y + 1,
        mask.width,
        mask.height,
    ))
}

/// A mask proposed by a segmenter together with its saliency score.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskCandidate {
    pub mask: Mask,
    pub saliency: f64,
}

/// Picks the primary object: highest saliency, then largest area, then the
/// centroid closest to the top-left (row first, then column).
pub fn select_primary(candidates: Vec<MaskCandidate>) -> Option<Mask> {
    let keyed = candidates
        .into_iter()
        .filter(|c| !c.mask.is_empty())
        .map(|c| {
            let area = c.mask.area();
            let (cx, cy) = c.mask.centroid().unwrap();
            (c, area, cx, cy)
        });
    keyed
        .min_by(|a, b| {
            b.0.saliency
                .total_cmp(&a.0.saliency)
                .then(b.1.cmp(&a.1))
                .then(a.3.total_cmp(&b.3))
                .then(a.2.total_cmp(&b.2))
        })
        .map(|(c, ..)| c.mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: scan every pixel, track extremes.
    fn brute_force_bbox(mask: &Mask) -> Option<(u32, u32, u32, u32)> {
        let mut ext: Option<(u32, u32, u32, u32)> = None;
        for y in 0..mask.height {
            for x in 0..mask.width {
                if mask.bits[(y * mask.width + x) as usize] {
                    ext = Some(match ext {
                        None => (x, y, x, y),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                    });
                }
            }
        }
        ext
    }

    #[test]
    fn full_mask_is_unit_box() {
        let b = mask_to_bbox(&Mask::full(320, 320)).unwrap();
        assert_eq!(b, BBox { cx: 0.5, cy: 0.5, w: 1.0, h: 1.0 });
    }

    #[test]
    fn single_pixel_box() {
        let mut m = Mask::empty(320, 320);
        m.set(0, 0, true);
        let b = mask_to_bbox(&m).unwrap();
        assert_eq!(b.cx, 0.5 / 320.0);
        assert_eq!(b.cy, 0.5 / 320.0);
        assert_eq!(b.w, 1.0 / 320.0);
        assert_eq!(b.h, 1.0 / 320.0);
        assert!(b.is_valid());
    }

    #[test]
    fn lower_middle_region() {
        let m = Mask::rect(320, 320, 80, 160, 239, 319);
        let (x0, y0, x1, y1) = brute_force_bbox(&m).unwrap();
        assert_eq!((x0, y0, x1, y1), (80, 160, 239, 319));
        let b = mask_to_bbox(&m).unwrap();
        assert_eq!(b, BBox { cx: 0.5, cy: 0.75, w: 0.5, h: 0.5 });
    }

    #[test]
    fn empty_mask_errors() {
        assert_eq!(mask_to_bbox(&Mask::empty(8, 8)), Err(VisionError::EmptyMask));
    }

    #[test]
    fn box_validation() {
        assert!(BBox::new(0.5, 0.5, 1.0, 1.0).is_ok());
        assert!(BBox::new(0.1, 0.5, 0.4, 0.2).is_err());
        assert!(BBox::new(0.5, 0.5, 0.0, 0.2).is_err());
        assert!(BBox::new(1.2, 0.5, 0.1, 0.1).is_err());
    }

    #[test]
    fn pixel_round_trip() {
        let b = BBox::from_pixels(100, 40, 48, 48, 320, 320);
        assert_eq!(b.to_pixels(320, 320), (100, 40, 48, 48));
    }

    #[test]
    fn primary_selection_rules() {
        let small = Mask::rect(16, 16, 0, 0, 1, 1);
        let big = Mask::rect(16, 16, 8, 8, 12, 12);
        let picked = select_primary(vec![
            MaskCandidate { mask: small.clone(), saliency: 0.9 },
            MaskCandidate { mask: big.clone(), saliency: 0.5 },
        ]);
        assert_eq!(picked.as_ref(), Some(&small));

        let picked = select_primary(vec![
            MaskCandidate { mask: small.clone(), saliency: 0.5 },
            MaskCandidate { mask: big.clone(), saliency: 0.5 },
        ]);
        assert_eq!(picked.as_ref(), Some(&big));

        let top = Mask::rect(16, 16, 10, 0, 11, 1);
        let left = Mask::rect(16, 16, 0, 5, 1, 6);
        let picked = select_primary(vec![
            MaskCandidate { mask: left, saliency: 0.5 },
            MaskCandidate { mask: top.clone(), saliency: 0.5 },
        ]);
        assert_eq!(picked, Some(top));

        assert_eq!(
            select_primary(vec![MaskCandidate { mask: Mask::empty(4, 4), saliency: 1.0 }]),
            None
        );
    }

    #[test]
    fn random_masks_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let w = rng.gen_range(1..64);
            let h = rng.gen_range(1..64);
            let density = rng.gen_range(0.0..0.05);
            let mut m = Mask::empty(w, h);
            for b in m.bits.iter_mut() {
                *b = rng.gen_bool(density);
            }
            match brute_force_bbox(&m) {
                None => assert_eq!(mask_to_bbox(&m), Err(VisionError::EmptyMask)),
                Some((x0, y0, x1, y1)) => {
                    let expected = BBox::from_pixels(x0, y0, x1 - x0 + 1, y1 - y0 + 1, w, h);
                    let got = mask_to_bbox(&m).unwrap();
                    assert_eq!(got, expected);
                    assert!(got.is_valid());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn rect_boxes_are_valid(w in 1u32..200, h in 1u32..200, a in 0u32..200, b in 0u32..200, c in 0u32..200, d in 0u32..200) {
            let (x0, x1) = ((a % w).min(c % w), (a % w).max(c % w));
            let (y0, y1) = ((b % h).min(d % h), (b % h).max(d % h));
            let bbox = mask_to_bbox(&Mask::rect(w, h, x0, y0, x1, y1)).unwrap();
            prop_assert!(bbox.is_valid());
            prop_assert_eq!(bbox.to_pixels(w, h), (x0, y0, x1 - x0 + 1, y1 - y0 + 1));
        }
    }
}
