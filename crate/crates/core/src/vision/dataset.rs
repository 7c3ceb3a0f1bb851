//! Detection dataset construction and on-disk annotation layout.
//!
//! Layout written by [`write_annotations`]:
//!
//! ```text
//! root/
//!   classes.txt            one label per line, line number = class id
//!   train/images/*.png     train/labels/*.txt
//!   val/images/*.png       val/labels/*.txt
//!   test/images/*.png      test/labels/*.txt
//!   train.txt val.txt test.txt
//! ```
//!
//! Each label file holds one line per object: `class_id cx cy w h` with
//! six-decimal normalized center-format coordinates. `train.txt`,
//! `val.txt` and `test.txt` list each split's images in dataset order.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BBox, VisionError};
use crate::protocol::ScopeFrame;

pub const MIN_DATASET_SAMPLES: usize = 10;
pub const CLASSES_FILE: &str = "classes.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSample {
    pub frame: Arc<ScopeFrame>,
    pub class_id: u32,
    pub bbox: BBox,
}

impl AnnotatedSample {
    pub fn label_line(&self) -> String {
        format!(
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class_id, self.bbox.cx, self.bbox.cy, self.bbox.w, self.bbox.h
        )
    }

    /// File stem shared by the image and its label file.
    pub fn stem(&self) -> String {
        format!("c{}_f{:06}", self.class_id, self.frame.sequence)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<AnnotatedSample>,
    pub val: Vec<AnnotatedSample>,
    pub test: Vec<AnnotatedSample>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// 7:2:1 split: test and validation sizes round down, train takes the rest.
pub fn split_sizes(n: usize) -> SplitSizes {
    let test = n / 10;
    let val = 2 * n / 10;
    SplitSizes {
        train: n - val - test,
        val,
        test,
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn splits(&self) -> [(&'static str, &[AnnotatedSample]); 3] {
        [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ]
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnnotatedSample> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

/// Shuffles `samples` deterministically by `seed` and splits them 7:2:1.
pub fn build_dataset(
    samples: Vec<AnnotatedSample>,
    class_names: Vec<String>,
    seed: u64,
) -> Result<Dataset, VisionError> {
    if samples.len() < MIN_DATASET_SAMPLES {
        return Err(VisionError::TooFewSamples {
            needed: MIN_DATASET_SAMPLES,
            got: samples.len(),
        });
    }
    if let Some(bad) = samples
        .iter()
        .find(|s| s.class_id as usize >= class_names.len())
    {
        return Err(VisionError::UnknownClass(bad.class_id));
    }
    if let Some(bad) = samples.iter().find(|s| !s.bbox.is_valid()) {
        return Err(VisionError::InvalidBox(bad.bbox));
    }

    let mut shuffled = samples;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sizes = split_sizes(shuffled.len());
    let test = shuffled.split_off(sizes.train + sizes.val);
    let val = shuffled.split_off(sizes.train);
    Ok(Dataset {
        train: shuffled,
        val,
        test,
        class_names,
    })
}

/// Paths written by [`write_annotations`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationManifest {
    pub images: Vec<PathBuf>,
    pub labels: Vec<PathBuf>,
    pub classes_file: PathBuf,
}

impl AnnotationManifest {
    pub fn len(&self) -> usize {
        self.images.len() + self.labels.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn io_failure(path: &Path, err: impl std::fmt::Display) -> VisionError {
    VisionError::IoFailure(format!("{}: {err}", path.display()))
}

pub fn write_annotations(dataset: &Dataset, root: &Path) -> Result<AnnotationManifest, VisionError> {
    let mut manifest = AnnotationManifest::default();
    fs::create_dir_all(root).map_err(|e| io_failure(root, e))?;

    let classes_file = root.join(CLASSES_FILE);
    let mut classes = dataset.class_names.join("\n");
    classes.push('\n');
    fs::write(&classes_file, classes).map_err(|e| io_failure(&classes_file, e))?;
    manifest.classes_file = classes_file;

    for (split, samples) in dataset.splits() {
        let list_path = root.join(format!("{split}.txt"));
        let list: String = samples
            .iter()
            .map(|s| format!("{split}/images/{}.png\n", s.stem()))
            .collect();
        fs::write(&list_path, list).map_err(|e| io_failure(&list_path, e))?;
        let images_dir = root.join(split).join("images");
        let labels_dir = root.join(split).join("labels");
        fs::create_dir_all(&images_dir).map_err(|e| io_failure(&images_dir, e))?;
        fs::create_dir_all(&labels_dir).map_err(|e| io_failure(&labels_dir, e))?;
        for sample in samples {
            let stem = sample.stem();
            let image_path = images_dir.join(format!("{stem}.png"));
            let label_path = labels_dir.join(format!("{stem}.txt"));
            write_png(&sample.frame, &image_path)?;
            fs::write(&label_path, format!("{}\n", sample.label_line()))
                .map_err(|e| io_failure(&label_path, e))?;
            manifest.images.push(image_path);
            manifest.labels.push(label_path);
        }
    }
    Ok(manifest)
}

/// Loads a dataset written by [`write_annotations`], preserving split order.
pub fn read_annotations(root: &Path) -> Result<Dataset, VisionError> {
    let classes_path = root.join(CLASSES_FILE);
    let class_names: Vec<String> = fs::read_to_string(&classes_path)
        .map_err(|e| io_failure(&classes_path, e))?
        .lines()
        .map(str::to_string)
        .collect();
    let mut splits: Vec<Vec<AnnotatedSample>> = Vec::with_capacity(3);
    for split in ["train", "val", "test"] {
        let list_path = root.join(format!("{split}.txt"));
        let list = fs::read_to_string(&list_path).map_err(|e| io_failure(&list_path, e))?;
        let mut samples = Vec::new();
        for image_rel in list.lines().filter(|l| !l.is_empty()) {
            let image_path = root.join(image_rel);
            let stem = image_path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| io_failure(&image_path, "bad file name"))?
                .to_string();
            let sequence = stem
                .rsplit_once("_f")
                .and_then(|(_, seq)| seq.parse::<u32>().ok())
                .ok_or_else(|| io_failure(&image_path, "file name lacks a frame number"))?;
            let label_path = root.join(split).join("labels").join(format!("{stem}.txt"));
            let label = fs::read_to_string(&label_path).map_err(|e| io_failure(&label_path, e))?;
            let (class_id, bbox) = parse_label_line(label.trim())
                .ok_or_else(|| io_failure(&label_path, "malformed label line"))?;
            let bytes = fs::read(&image_path).map_err(|e| io_failure(&image_path, e))?;
            let frame = crate::imaging::decode_png(&bytes, sequence)
                .map_err(|e| io_failure(&image_path, e))?;
            samples.push(AnnotatedSample {
                frame: Arc::new(frame),
                class_id,
                bbox,
            });
        }
        splits.push(samples);
    }
    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(Dataset {
        train,
        val,
        test,
        class_names,
    })
}

/// Parses `class_id cx cy w h`.
pub fn parse_label_line(line: &str) -> Option<(u32, BBox)> {
    let mut parts = line.split_whitespace();
    let class_id = parts.next()?.parse().ok()?;
    let mut v = [0.0f64; 4];
    for slot in &mut v {
        *slot = parts.next()?.parse().ok()?;
    }
    if parts.next().is_some() {
        return None;
    }
    BBox::new(v[0], v[1], v[2], v[3]).ok().map(|b| (class_id, b))
}

fn write_png(frame: &ScopeFrame, path: &Path) -> Result<(), VisionError> {
    let bytes = crate::imaging::encode_png(frame).map_err(|e| io_failure(path, e))?;
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn samples(n: usize) -> Vec<AnnotatedSample> {
        (0..n)
            .map(|i| AnnotatedSample {
                frame: Arc::new(ScopeFrame::filled(i as u32, 8, 8, [i as u8, 0, 0])),
                class_id: 0,
                bbox: BBox::new(0.5, 0.5, 1.0, 1.0).unwrap(),
            })
            .collect()
    }

    fn seqs(split: &[AnnotatedSample]) -> Vec<u32> {
        split.iter().map(|s| s.frame.sequence).collect()
    }

    #[test]
    fn split_sizes_reference_points() {
        assert_eq!(split_sizes(100), SplitSizes { train: 70, val: 20, test: 10 });
        assert_eq!(split_sizes(10), SplitSizes { train: 7, val: 2, test: 1 });
        assert_eq!(split_sizes(101), SplitSizes { train: 71, val: 20, test: 10 });
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            build_dataset(samples(9), vec!["mug".into()], 0),
            Err(VisionError::TooFewSamples { needed: 10, got: 9 })
        );
    }

    #[test]
    fn unknown_class_rejected() {
        let mut s = samples(10);
        s[3].class_id = 1;
        assert_eq!(
            build_dataset(s, vec!["mug".into()], 0),
            Err(VisionError::UnknownClass(1))
        );
    }

    #[test]
    fn seeded_split_is_deterministic_and_disjoint() {
        let a = build_dataset(samples(100), vec!["mug".into()], 42).unwrap();
        let b = build_dataset(samples(100), vec!["mug".into()], 42).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (70, 20, 10));
        let all: HashSet<u32> = a.iter().map(|s| s.frame.sequence).collect();
        assert_eq!(all.len(), 100);
        let c = build_dataset(samples(100), vec!["mug".into()], 43).unwrap();
        assert_ne!(seqs(&a.train), seqs(&c.train));
    }

    #[test]
    fn label_line_format() {
        let s = &samples(1)[0];
        assert_eq!(s.label_line(), "0 0.500000 0.500000 1.000000 1.000000");
    }

    #[test]
    fn annotations_round_trip_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let ds = build_dataset(samples(20), vec!["mug".into(), "pumpkin toy".into()], 5).unwrap();
        write_annotations(&ds, dir.path()).unwrap();
        let back = read_annotations(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(parse_label_line("0 0.5 0.5 0.2"), None);
        assert_eq!(parse_label_line("0 0.5 0.5 0.2 0.2 9"), None);
    }

    #[test]
    fn writes_yolo_layout() {
        let dir = tempfile::tempdir().unwrap();
        let ds = build_dataset(samples(100), vec!["mug".into()], 1).unwrap();
        let manifest = write_annotations(&ds, dir.path()).unwrap();
        assert_eq!(manifest.images.len(), 100);
        assert_eq!(manifest.labels.len(), 100);
        assert_eq!(manifest.len(), 201);
        assert_eq!(
            fs::read_to_string(dir.path().join("classes.txt")).unwrap(),
            "mug\n"
        );
        for (img, lbl) in manifest.images.iter().zip(&manifest.labels) {
            assert_eq!(img.file_stem(), lbl.file_stem());
            assert_eq!(
                img.parent().unwrap().parent(),
                lbl.parent().unwrap().parent()
            );
        }
        let train_labels = fs::read_dir(dir.path().join("train/labels")).unwrap().count();
        assert_eq!(train_labels, 70);
    }

    #[test]
    fn unwritable_root_is_io_failure() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let ds = build_dataset(samples(10), vec!["mug".into()], 1).unwrap();
        assert!(matches!(
            write_annotations(&ds, &blocker.join("sub")),
            Err(VisionError::IoFailure(_))
        ));
    }
}
