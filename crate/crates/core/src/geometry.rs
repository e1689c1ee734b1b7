//! Axis-aligned box arithmetic shared by every stage of the pipeline.
//!
//! Boxes live in continuous pixel coordinates `(x, y, w, h)` with the origin
//! at the top-left corner of the image. They are only rounded when a report
//! is written.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{InspectError, Result};

/// Axis-aligned box in pixel coordinates. Width and height are strictly
/// positive; the left/top edges are non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(InspectError::usage(format!(
                "box ({x}, {y}, {w}, {h}) has non-finite coordinates"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(InspectError::usage(format!(
                "box ({x}, {y}, {w}, {h}) has zero or negative area"
            )));
        }
        if x < 0.0 || y < 0.0 {
            return Err(InspectError::usage(format!(
                "box ({x}, {y}, {w}, {h}) starts outside the image"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    /// Build a box from its corner coordinates. The extent is rounded up so
    /// that `right()` and `bottom()` never fall short of `x1` and `y1`.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let extent = |lo: f64, hi: f64| {
            let mut len = hi - lo;
            while len.is_finite() && lo + len < hi {
                len = len.next_up();
            }
            len
        };
        Self::new(x0, y0, extent(x0, x1), extent(y0, y1))
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Diagonal length `sqrt(w² + h²)`.
    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    /// True when `other` lies entirely inside `self` (shared edges allowed).
    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    /// Area of the overlap with `other`; zero when they only share an edge.
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Shift the box by `(dx, dy)`.
    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = InspectError;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x, self.y, self.w, self.h)
    }
}

/// Grid position of the slice a detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SliceIndex {
    pub row: u32,
    pub col: u32,
}

/// A scored box emitted by one detector for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    confidence: f64,
    pub model_id: String,
    pub image_id: String,
    pub class_label: String,
    /// Slice the detection was produced on, `None` for full-image passes and
    /// for boxes synthesized by merging.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<SliceIndex>,
}

pub const DEFECT_CLASS: &str = "defect";

impl Detection {
    pub fn new(
        bbox: BoundingBox,
        confidence: f64,
        model_id: impl Into<String>,
        image_id: impl Into<String>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(InspectError::usage(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            bbox,
            confidence,
            model_id: model_id.into(),
            image_id: image_id.into(),
            class_label: DEFECT_CLASS.to_string(),
            slice: None,
        })
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn with_slice(mut self, slice: SliceIndex) -> Self {
        self.slice = Some(slice);
        self
    }

    pub fn with_bbox(mut self, bbox: BoundingBox) -> Self {
        self.bbox = bbox;
        self
    }
}

/// Intersection over union; symmetric, in `[0, 1]`, zero for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Smallest box containing every input box.
pub fn union_box(boxes: &[BoundingBox]) -> Result<BoundingBox> {
    let first = boxes
        .first()
        .ok_or_else(|| InspectError::usage("union_box needs at least one box"))?;
    let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.right(), first.bottom());
    for b in &boxes[1..] {
        x0 = x0.min(b.x);
        y0 = y0.min(b.y);
        x1 = x1.max(b.right());
        y1 = y1.max(b.bottom());
    }
    BoundingBox::from_corners(x0, y0, x1, y1)
}

/// Ranking used wherever detections are ordered: confidence descending, then
/// smaller x, smaller y, smaller area.
pub fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.bbox.x.total_cmp(&b.bbox.x))
        .then_with(|| a.bbox.y.total_cmp(&b.bbox.y))
        .then_with(|| a.bbox.area().total_cmp(&b.bbox.area()))
}

/// Keep detections whose confidence is at least `threshold`, in input order.
pub fn filter_by_confidence(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    dets.iter().filter(|d| d.confidence >= threshold).cloned().collect()
}

/// Greedy non-maximum suppression.
///
/// Detections are visited in [`rank_order`]; each survivor removes every
/// remaining detection whose IoU with it is at least `threshold`. The result
/// is in rank order.
pub fn nms(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let mut sorted: Vec<&Detection> = dets.iter().collect();
    sorted.sort_by(|a, b| rank_order(a, b));

    let mut suppressed = vec![false; sorted.len()];
    let mut kept = Vec::new();
    for i in 0..sorted.len() {
        if suppressed[i] {
            continue;
        }
        kept.push(sorted[i].clone());
        for j in i + 1..sorted.len() {
            if !suppressed[j] && iou(&sorted[i].bbox, &sorted[j].bbox) >= threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}
