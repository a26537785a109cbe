//! Semantic-segmentation scoring: confusion matrices and mean IoU.

use crate::{Error, Result};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const DEFAULT_CLASSES: usize = 19;
pub const IGNORE_INDEX: u32 = 255;

/// Cityscapes evaluation classes in train-id order.
pub const CITYSCAPES_CLASSES: [&str; 19] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic light",
    "traffic sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

/// Per-pixel class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    n_classes: usize,
    ignore_index: u32,
}

impl LabelMap {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u32>,
        n_classes: usize,
        ignore_index: u32,
    ) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        if let Some(&label) = labels
            .iter()
            .find(|&&l| l != ignore_index && l as usize >= n_classes)
        {
            return Err(Error::LabelOutOfRange { label, n_classes });
        }
        Ok(LabelMap {
            width,
            height,
            labels,
            n_classes,
            ignore_index,
        })
    }

    /// 19 classes, ignore index 255.
    pub fn cityscapes(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        Self::new(width, height, labels, DEFAULT_CLASSES, IGNORE_INDEX)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn ignore_index(&self) -> u32 {
        self.ignore_index
    }
}

/// Reads an 8- or 16-bit single-channel label image.
pub fn read_label_image(path: &Path, n_classes: usize, ignore_index: u32) -> Result<LabelMap> {
    let img = image::open(path).map_err(|cause| Error::Image {
        path: path.into(),
        cause,
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u32> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        image::DynamicImage::ImageLuma16(buf) => {
            buf.into_raw().into_iter().map(u32::from).collect()
        }
        other => {
            return Err(Error::format(
                "label image",
                format!(
                    "{}: expected single-channel 8/16-bit, got {:?}",
                    path.display(),
                    other.color()
                ),
            ))
        }
    };
    LabelMap::new(w, h, labels, n_classes, ignore_index)
}

/// Counts indexed `[ground truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_counts(n_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != n_classes * n_classes {
            return Err(Error::ShapeMismatch(format!(
                "{} counts for {n_classes} classes",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { n_classes, counts })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.n_classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds every pixel whose ground truth is not the ignore index.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if pred.dims() != gt.dims() {
            return Err(Error::ShapeMismatch(format!(
                "prediction {:?} vs ground truth {:?}",
                pred.dims(),
                gt.dims()
            )));
        }
        if pred.n_classes != self.n_classes || gt.n_classes != self.n_classes {
            return Err(Error::ShapeMismatch("class counts differ".into()));
        }
        let n = self.n_classes;
        let mut local = vec![0u64; n * n];
        for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
            if g == gt.ignore_index {
                continue;
            }
            if p as usize >= n {
                return Err(Error::LabelOutOfRange {
                    label: p,
                    n_classes: n,
                });
            }
            local[g as usize * n + p as usize] += 1;
        }
        for (c, l) in self.counts.iter_mut().zip(local) {
            *c += l;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::ShapeMismatch("class counts differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Per-class IoU and their mean over classes with a nonzero denominator.
    pub fn miou(&self) -> Result<MiouReport> {
        let n = self.n_classes;
        let per_class: Vec<Option<f64>> = (0..n)
            .map(|c| {
                let tp = self.get(c, c);
                let row: u64 = (0..n).map(|p| self.get(c, p)).sum();
                let col: u64 = (0..n).map(|g| self.get(g, c)).sum();
                let denom = row + col - tp;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect();
        let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
        if defined.is_empty() {
            return Err(Error::EmptyEvaluation);
        }
        Ok(MiouReport {
            miou: defined.iter().sum::<f64>() / defined.len() as f64,
            per_class,
            pixels: self.total(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiouReport {
    /// `None` where the class never occurs in ground truth or prediction.
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
    pub pixels: u64,
}

impl MiouReport {
    /// Plain-text table in percent.
    pub fn to_text(&self, class_names: Option<&[&str]>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:>8}", "class", "IoU(%)");
        for (c, iou) in self.per_class.iter().enumerate() {
            let name = class_names
                .and_then(|n| n.get(c).map(|s| s.to_string()))
                .unwrap_or_else(|| c.to_string());
            let v = iou.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
            let _ = writeln!(out, "{name:<16} {v:>8}");
        }
        let _ = writeln!(out, "{:<16} {:>8.2}", "mIoU", 100.0 * self.miou);
        let _ = writeln!(out, "{:<16} {:>8}", "pixels", self.pixels);
        out
    }
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// Scores every ground-truth image in `gt_dir` against the same-named file in
/// `pred_dir`. Images are read and counted concurrently, then merged.
pub fn evaluate_dirs(
    pred_dir: &Path,
    gt_dir: &Path,
    n_classes: usize,
    ignore_index: u32,
) -> Result<(ConfusionMatrix, usize)> {
    let gts = list_images(gt_dir)?;
    if gts.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let parts = crate::par::map_slice(&gts, |gt_path| -> Result<ConfusionMatrix> {
        let name = gt_path.file_name().expect("listed files have names");
        let pred_path = pred_dir.join(name);
        if !pred_path.is_file() {
            return Err(Error::Lookup(format!(
                "no prediction {} for {}",
                pred_path.display(),
                gt_path.display()
            )));
        }
        let gt = read_label_image(gt_path, n_classes, ignore_index)?;
        let pred = read_label_image(&pred_path, n_classes, ignore_index)?;
        let mut conf = ConfusionMatrix::new(n_classes);
        conf.accumulate(&pred, &gt)?;
        Ok(conf)
    });
    let mut total = ConfusionMatrix::new(n_classes);
    for p in parts {
        total.merge(&p?)?;
    }
    Ok((total, gts.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_block() {
        let m = LabelMap::cityscapes(2, 2, vec![3; 4]).unwrap();
        let mut c = ConfusionMatrix::new(19);
        c.accumulate(&m, &m).unwrap();
        assert_eq!(c.get(3, 3), 4);
        assert_eq!(c.total(), 4);
        let r = c.miou().unwrap();
        assert_eq!(r.miou, 1.0);
        assert_eq!(r.per_class.iter().flatten().count(), 1);
    }

    #[test]
    fn ignored_ground_truth_adds_nothing() {
        let gt = LabelMap::cityscapes(2, 2, vec![255; 4]).unwrap();
        let pred = LabelMap::cityscapes(2, 2, vec![1; 4]).unwrap();
        let mut c = ConfusionMatrix::new(19);
        c.accumulate(&pred, &gt).unwrap();
        assert_eq!(c, ConfusionMatrix::new(19));
        assert!(matches!(c.miou(), Err(Error::EmptyEvaluation)));
    }

    #[test]
    fn two_class_example() {
        let c = ConfusionMatrix::from_counts(2, vec![1, 1, 0, 2]).unwrap();
        let r = c.miou().unwrap();
        assert_eq!(r.per_class, vec![Some(0.5), Some(2.0 / 3.0)]);
        assert!((r.miou - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn bad_labels_and_shapes() {
        assert!(matches!(
            LabelMap::new(1, 1, vec![5], 5, 255),
            Err(Error::LabelOutOfRange { label: 5, .. })
        ));
        let a = LabelMap::new(2, 1, vec![0, 1], 5, 255).unwrap();
        let b = LabelMap::new(1, 2, vec![0, 1], 5, 255).unwrap();
        assert!(ConfusionMatrix::new(5).accumulate(&a, &b).is_err());
        let ignored_pred = LabelMap::new(2, 1, vec![255, 1], 5, 255).unwrap();
        assert!(ConfusionMatrix::new(5)
            .accumulate(&ignored_pred, &a)
            .is_err());
    }

    #[test]
    fn report_text_lists_classes() {
        let c = ConfusionMatrix::from_counts(2, vec![1, 1, 0, 2]).unwrap();
        let text = c.miou().unwrap().to_text(Some(&["a", "b"]));
        assert!(text.contains("a                   50.00"));
        assert!(text.contains("mIoU                58.33"));
    }

    #[test]
    fn label_images_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p8 = dir.path().join("a.png");
        image::GrayImage::from_raw(2, 1, vec![3, 255])
            .unwrap()
            .save(&p8)
            .unwrap();
        let m = read_label_image(&p8, 19, 255).unwrap();
        assert_eq!(m.labels(), &[3, 255]);
        let p16 = dir.path().join("b.png");
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 1, vec![300u16, 2])
            .unwrap()
            .save(&p16)
            .unwrap();
        let m = read_label_image(&p16, 400, 65535).unwrap();
        assert_eq!(m.labels(), &[300, 2]);
    }
}
