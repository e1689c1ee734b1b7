//! Detection quality metrics: one-to-one matching, precision/recall, average
//! precision and measurement error.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{InspectError, Result};
use crate::geometry::{iou, rank_order, BoundingBox, Detection};

/// IoU used for FP/FN counting and for pairing sizes in the MAE.
pub const COUNTING_IOU: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// Matched ground-truth index for each prediction, in input order.
    pub assignments: Vec<Option<usize>>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Greedy one-to-one matching for a single image.
///
/// Predictions are visited in [`rank_order`]. Each takes the still unmatched
/// ground truth of highest IoU (lowest index on ties) when that IoU reaches
/// `iou_threshold`, and otherwise counts as a false positive. The threshold
/// is expected in `(0, 1]`.
pub fn match_detections(preds: &[Detection], gt: &[BoundingBox], iou_threshold: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| rank_order(&preds[a], &preds[b]));

    let mut taken = vec![false; gt.len()];
    let mut assignments = vec![None; preds.len()];
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gt.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let v = iou(&preds[i].bbox, g);
            if v >= iou_threshold && v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            assignments[i] = Some(j);
        }
    }
    let tp = assignments.iter().flatten().count();
    MatchResult {
        assignments,
        tp,
        fp: preds.len() - tp,
        fn_: gt.len() - tp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    /// Confidence cut: every prediction at or above it is counted.
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision/recall at every distinct confidence cut, pooled over images.
pub fn precision_recall_curve<'a, I>(images: I, iou_threshold: f64) -> (Vec<PrPoint>, usize)
where
    I: IntoIterator<Item = (&'a [Detection], &'a [BoundingBox])>,
{
    let mut scored: Vec<(f64, bool)> = Vec::new();
    let mut total_gt = 0;
    for (preds, gt) in images {
        let m = match_detections(preds, gt, iou_threshold);
        total_gt += gt.len();
        scored.extend(
            preds
                .iter()
                .zip(&m.assignments)
                .map(|(p, a)| (p.confidence(), a.is_some())),
        );
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let cut = scored[i].0;
        while i < scored.len() && scored[i].0 == cut {
            tp += scored[i].1 as usize;
            seen += 1;
            i += 1;
        }
        points.push(PrPoint {
            confidence: cut,
            precision: tp as f64 / seen as f64,
            recall: if total_gt == 0 {
                0.0
            } else {
                tp as f64 / total_gt as f64
            },
        });
    }
    (points, total_gt)
}

/// Area under the precision/recall curve with all-point interpolation.
///
/// Predictions sharing a confidence enter together. With no ground truth the
/// result is 1.0 when there are also no predictions and 0.0 otherwise.
pub fn average_precision<'a, I>(images: I, iou_threshold: f64) -> f64
where
    I: IntoIterator<Item = (&'a [Detection], &'a [BoundingBox])>,
{
    let (points, total_gt) = precision_recall_curve(images, iou_threshold);
    if total_gt == 0 {
        return if points.is_empty() { 1.0 } else { 0.0 };
    }
    area_under(&points)
}

fn area_under(points: &[PrPoint]) -> f64 {
    let mut envelope: Vec<f64> = points.iter().map(|p| p.precision).collect();
    for k in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (p, env) in points.iter().zip(envelope) {
        area += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    area
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDefect {
    pub bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruthSet {
    pub images: BTreeMap<String, Vec<GroundTruthDefect>>,
}

impl GroundTruthSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub bbox: BoundingBox,
    pub conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_mm: Option<f64>,
}

/// Predictions per image, in the same layout as [`GroundTruthSet`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    pub images: BTreeMap<String, Vec<Prediction>>,
}

impl PredictionSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn from_detections<'a>(dets: impl IntoIterator<Item = &'a Detection>) -> Self {
        let mut set = Self::default();
        for d in dets {
            set.images.entry(d.image_id.clone()).or_default().push(Prediction {
                bbox: d.bbox,
                conf: d.confidence(),
                size_mm: None,
            });
        }
        set
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ap50: f64,
    pub ap30: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision_recall_points: Vec<PrPoint>,
    /// Mean absolute size error over predictions matched at IoU 0.3 where
    /// both sides carry a size.
    pub mae_mm: Option<f64>,
}

/// Score a prediction set against ground truth.
///
/// Every predicted image must appear in the ground truth (an image with no
/// defects is listed with an empty array); ground-truth images without
/// predictions count their defects as missed.
pub fn evaluate_run(preds: &PredictionSet, gt: &GroundTruthSet) -> Result<EvalResult> {
    if let Some(id) = preds.images.keys().find(|id| !gt.images.contains_key(*id)) {
        return Err(InspectError::lookup(format!(
            "predicted image {id} has no ground-truth entry"
        )));
    }
    let mut rows = Vec::with_capacity(gt.images.len());
    for (id, truth) in &gt.images {
        let dets = preds
            .images
            .get(id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
            .iter()
            .map(|p| Detection::new(p.bbox, p.conf, "eval", id))
            .collect::<Result<Vec<_>>>()?;
        let boxes: Vec<BoundingBox> = truth.iter().map(|g| g.bbox).collect();
        rows.push((id, dets, boxes));
    }
    let pairs = || rows.iter().map(|(_, d, b)| (d.as_slice(), b.as_slice()));

    let ap50 = average_precision(pairs(), 0.5);
    let ap30 = average_precision(pairs(), COUNTING_IOU);
    let (points, _) = precision_recall_curve(pairs(), 0.5);

    let (mut fp, mut fn_) = (0, 0);
    let mut errors = Vec::new();
    for (id, dets, boxes) in &rows {
        let m = match_detections(dets, boxes, COUNTING_IOU);
        fp += m.fp;
        fn_ += m.fn_;
        let sizes = preds.images.get(*id).map(Vec::as_slice).unwrap_or(&[]);
        for (p, a) in sizes.iter().zip(&m.assignments) {
            if let (Some(j), Some(est)) = (a, p.size_mm) {
                if let Some(truth) = gt.images[*id][*j].size_mm {
                    errors.push((est - truth).abs());
                }
            }
        }
    }
    let mae_mm = (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64);

    Ok(EvalResult {
        ap50,
        ap30,
        fp,
        fn_,
        precision_recall_points: points,
        mae_mm,
    })
}
