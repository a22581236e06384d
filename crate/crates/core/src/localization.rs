//! Weakly-supervised localization: threshold the CAM, keep the largest
//! 8-connected blob, box it, and score the box against ground truth by IoU.

use std::collections::VecDeque;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BoundingBox, Heatmap};

/// Fraction of the map maximum a pixel must reach to be kept.
pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.15;
/// A localization counts as correct at IoU at or above this value.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Top-k used for the loc5 criterion.
pub const TOP5: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    data: Array2<bool>,
}

impl BinaryMask {
    pub fn new(data: Array2<bool>) -> Self {
        Self { data }
    }

    pub fn from_fn(dim: (usize, usize), f: impl FnMut((usize, usize)) -> bool) -> Self {
        Self {
            data: Array2::from_shape_fn(dim, f),
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[[row, col]]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// `mask[p] = map[p] ≥ frac · max(map)`; an all-zero map selects nothing.
pub fn binarize(map: &Heatmap, frac: f64) -> BinaryMask {
    let max = map.max();
    if max <= 0.0 {
        return BinaryMask::new(Array2::from_elem(map.dim(), false));
    }
    let cut = frac * max;
    BinaryMask::new(map.view().mapv(|v| v >= cut))
}

/// Tight box around the largest 8-connected component. Components are
/// labelled in row-major order of their first pixel; ties in size go to the
/// lower label.
pub fn largest_component_box(mask: &BinaryMask) -> Option<BoundingBox> {
    let (h, w) = mask.dim();
    let mut seen = Array2::from_elem((h, w), false);
    let mut best: Option<(usize, BoundingBox)> = None;
    let mut queue = VecDeque::new();

    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) || seen[[y, x]] {
                continue;
            }
            seen[[y, x]] = true;
            queue.push_back((y, x));
            let (mut size, mut x0, mut y0, mut x1, mut y1) = (0, x, y, x, y);
            while let Some((cy, cx)) = queue.pop_front() {
                size += 1;
                x0 = x0.min(cx);
                x1 = x1.max(cx);
                y0 = y0.min(cy);
                y1 = y1.max(cy);
                for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                    for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                        if mask.get(ny, nx) && !seen[[ny, nx]] {
                            seen[[ny, nx]] = true;
                            queue.push_back((ny, nx));
                        }
                    }
                }
            }
            if best.is_none_or(|(s, _)| size > s) {
                let bbox = BoundingBox {
                    x_min: x0,
                    y_min: y0,
                    x_max: x1 + 1,
                    y_max: y1 + 1,
                };
                best = Some((size, bbox));
            }
        }
    }
    best.map(|(_, b)| b)
}

/// Intersection over union of two pixel rectangles.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = a.x_max.min(b.x_max).saturating_sub(a.x_min.max(b.x_min));
    let iy = a.y_max.min(b.y_max).saturating_sub(a.y_min.max(b.y_min));
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// IoU against the best-matching ground-truth box.
pub fn best_iou(pred: &BoundingBox, gt: &[BoundingBox]) -> Option<f64> {
    gt.iter().map(|g| iou(pred, g)).reduce(f64::max)
}

/// Ground-truth sidecar (`gt.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_index: usize,
    pub boxes: Vec<BoundingBox>,
    /// `[height, width]` of the image the boxes refer to, when it differs
    /// from the model input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_size: Option<[usize; 2]>,
}

impl GroundTruth {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let gt: GroundTruth = serde_json::from_str(&text)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        if gt.boxes.is_empty() {
            return Err(Error::Input(format!("{}: no boxes", path.display())));
        }
        Ok(gt)
    }

    /// Boxes mapped onto an `(height, width)` grid.
    pub fn boxes_in(&self, target: (usize, usize)) -> Vec<BoundingBox> {
        let Some([oh, ow]) = self.original_size else {
            return self.boxes.clone();
        };
        if (oh, ow) == target {
            return self.boxes.clone();
        }
        let (th, tw) = target;
        let sx = tw as f64 / ow as f64;
        let sy = th as f64 / oh as f64;
        self.boxes
            .iter()
            .map(|b| {
                let x_min = ((b.x_min as f64 * sx).floor() as usize).min(tw - 1);
                let y_min = ((b.y_min as f64 * sy).floor() as usize).min(th - 1);
                BoundingBox {
                    x_min,
                    y_min,
                    x_max: ((b.x_max as f64 * sx).ceil() as usize).clamp(x_min + 1, tw),
                    y_max: ((b.y_max as f64 * sy).ceil() as usize).clamp(y_min + 1, th),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRecord {
    pub image_id: String,
    pub gt_box: BoundingBox,
    pub gt_class: usize,
    pub pred_box: Option<BoundingBox>,
    /// Present iff `pred_box` is.
    pub iou: Option<f64>,
    pub top1_correct: bool,
    pub top5_correct: bool,
}

impl LocalizationRecord {
    /// Scores one CAM: binarize, box the largest component, match against
    /// the ground-truth box with the highest IoU.
    pub fn evaluate(
        image_id: &str,
        cam: &Heatmap,
        gt_boxes: &[BoundingBox],
        gt_class: usize,
        ranked_classes: &[usize],
        threshold_frac: f64,
    ) -> Result<Self> {
        if gt_boxes.is_empty() {
            return Err(Error::Input(format!("{image_id}: no ground-truth boxes")));
        }
        let pred_box = largest_component_box(&binarize(cam, threshold_frac));
        let (gt_box, iou) = match pred_box {
            Some(p) => {
                let (g, v) = gt_boxes
                    .iter()
                    .map(|g| (*g, iou(&p, g)))
                    .fold(None, |acc: Option<(BoundingBox, f64)>, (g, v)| match acc {
                        Some((_, best)) if best >= v => acc,
                        _ => Some((g, v)),
                    })
                    .expect("non-empty");
                (g, Some(v))
            }
            None => (gt_boxes[0], None),
        };
        let top1_correct = ranked_classes.first() == Some(&gt_class);
        let top5_correct = ranked_classes.iter().take(TOP5).any(|&c| c == gt_class);
        Ok(Self {
            image_id: image_id.to_string(),
            gt_box,
            gt_class,
            pred_box,
            iou,
            top1_correct,
            top5_correct,
        })
    }

    fn hit(&self, iou_threshold: f64) -> bool {
        self.iou.is_some_and(|v| v >= iou_threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationAccuracy {
    /// `None` when no record is top-1 correct.
    pub loc1: Option<f64>,
    /// `None` when no record is top-5 correct.
    pub loc5: Option<f64>,
    pub top1_count: usize,
    pub top5_count: usize,
}

/// loc1: fraction of top-1-correct records localized at IoU ≥ threshold;
/// loc5 likewise over the top-5-correct records.
pub fn localization_accuracy(
    records: &[LocalizationRecord],
    iou_threshold: f64,
) -> Result<LocalizationAccuracy> {
    if records.is_empty() {
        return Err(Error::Input("no localization records".into()));
    }
    let rate = |pick: fn(&LocalizationRecord) -> bool| {
        let eligible: Vec<_> = records.iter().filter(|r| pick(r)).collect();
        let hits = eligible.iter().filter(|r| r.hit(iou_threshold)).count();
        let rate = (!eligible.is_empty()).then(|| hits as f64 / eligible.len() as f64);
        (rate, eligible.len())
    };
    let (loc1, top1_count) = rate(|r| r.top1_correct);
    let (loc5, top5_count) = rate(|r| r.top5_correct);
    Ok(LocalizationAccuracy {
        loc1,
        loc5,
        top1_count,
        top5_count,
    })
}
