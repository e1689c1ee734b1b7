//! Brute-force reference implementations, written without reusing the
//! library's algorithms.

use inspect_core::{BoundingBox, Detection};
use rand::Rng;

/// IoU from corner coordinates.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x() + a.w()).min(b.x() + b.w()) - a.x().max(b.x());
    let iy = (a.y() + a.h()).min(b.y() + b.h()) - a.y().max(b.y());
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.w() * a.h() + b.w() * b.h() - inter)
}

/// Indices of `dets` sorted by confidence descending, then x, y, area
/// ascending, then input position.
pub fn rank(dets: &[Detection]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&i, &j| {
        let key = |k: usize| {
            let d = &dets[k];
            (-d.confidence(), d.bbox.x(), d.bbox.y(), d.bbox.w() * d.bbox.h(), k)
        };
        key(i).partial_cmp(&key(j)).unwrap()
    });
    idx
}

/// NMS by exhaustive search. The greedy result is the unique subset `S`
/// (over rank positions) where a detection belongs to `S` exactly when no
/// higher-ranked member of `S` overlaps it at or above the threshold. Every
/// subset is tested; exactly one must qualify.
pub fn nms(dets: &[Detection], threshold: f64) -> Vec<usize> {
    let order = rank(dets);
    let n = order.len();
    assert!(n <= 16, "oracle is exponential");
    // suppressors[p]: bitmask of rank positions above p that overlap it
    let suppressors: Vec<u32> = (0..n)
        .map(|p| {
            (0..p)
                .filter(|&q| iou(&dets[order[p]].bbox, &dets[order[q]].bbox) >= threshold)
                .fold(0u32, |m, q| m | 1 << q)
        })
        .collect();
    let fixed_points: Vec<u32> = (0u32..1 << n)
        .filter(|&s| (0..n).all(|p| (s >> p & 1 == 1) == (s & suppressors[p] == 0)))
        .collect();
    assert_eq!(fixed_points.len(), 1, "characterization must be unique");
    let s = fixed_points[0];
    (0..n).filter(|p| s >> p & 1 == 1).map(|p| order[p]).collect()
}

fn greedy_true_positives(dets: &[&Detection], gt: &[BoundingBox], threshold: f64) -> usize {
    let owned: Vec<Detection> = dets.iter().map(|d| (*d).clone()).collect();
    let mut used = vec![false; gt.len()];
    let mut tp = 0;
    for i in rank(&owned) {
        let mut best = None;
        let mut best_iou = 0.0;
        for (j, g) in gt.iter().enumerate() {
            let v = iou(&owned[i].bbox, g);
            if !used[j] && v >= threshold && v > best_iou {
                best = Some(j);
                best_iou = v;
            }
        }
        if let Some(j) = best {
            used[j] = true;
            tp += 1;
        }
    }
    tp
}

/// AP from precision and recall evaluated independently at every distinct
/// confidence cut, re-matching from scratch at each cut.
pub fn average_precision(images: &[ImagePair], threshold: f64) -> f64 {
    let total_gt: usize = images.iter().map(|(_, g)| g.len()).sum();
    let total_pred: usize = images.iter().map(|(p, _)| p.len()).sum();
    if total_gt == 0 {
        return if total_pred == 0 { 1.0 } else { 0.0 };
    }
    let mut cuts: Vec<f64> = images
        .iter()
        .flat_map(|(p, _)| p.iter().map(|d| d.confidence()))
        .collect();
    cuts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    cuts.dedup();

    let curve: Vec<(f64, f64)> = cuts
        .iter()
        .map(|&cut| {
            let (mut tp, mut n) = (0, 0);
            for (preds, gt) in images {
                let kept: Vec<&Detection> = preds.iter().filter(|d| d.confidence() >= cut).collect();
                n += kept.len();
                tp += greedy_true_positives(&kept, gt, threshold);
            }
            (tp as f64 / total_gt as f64, tp as f64 / n as f64)
        })
        .collect();

    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (k, &(recall, _)) in curve.iter().enumerate() {
        let best_later = curve[k..].iter().map(|c| c.1).fold(0.0, f64::max);
        ap += (recall - prev_recall) * best_later;
        prev_recall = recall;
    }
    ap
}

/// Integer-aligned box, so overlaps are exact in floating point.
pub fn random_box(rng: &mut impl Rng, extent: u32) -> BoundingBox {
    let w = rng.random_range(4..=40) as f64;
    let h = rng.random_range(4..=40) as f64;
    let x = rng.random_range(0..extent) as f64;
    let y = rng.random_range(0..extent) as f64;
    BoundingBox::new(x, y, w, h).unwrap()
}

/// Confidence on a coarse grid so ties occur often.
pub fn random_conf(rng: &mut impl Rng) -> f64 {
    rng.random_range(1..=10) as f64 / 10.0
}

pub const THRESHOLDS: [f64; 5] = [0.1, 0.15, 0.3, 0.5, 0.7];

pub fn random_nms_instance(rng: &mut impl Rng) -> (Vec<Detection>, f64) {
    let n = rng.random_range(0..=12);
    let dets = (0..n)
        .map(|_| Detection::new(random_box(rng, 60), random_conf(rng), "F1", "img").unwrap())
        .collect();
    (dets, THRESHOLDS[rng.random_range(0..THRESHOLDS.len())])
}

/// Predictions and ground truth for one image.
pub type ImagePair = (Vec<Detection>, Vec<BoundingBox>);

pub fn random_ap_instance(rng: &mut impl Rng) -> (Vec<ImagePair>, f64) {
    let images = rng.random_range(1..=3);
    let mut preds_left = rng.random_range(0..=20usize);
    let mut gt_left = rng.random_range(0..=10usize);
    let mut out = Vec::new();
    for i in 0..images {
        let last = i + 1 == images;
        let np = if last {
            preds_left
        } else {
            rng.random_range(0..=preds_left)
        };
        let ng = if last { gt_left } else { rng.random_range(0..=gt_left) };
        preds_left -= np;
        gt_left -= ng;
        let id = format!("img{i}");
        let gt: Vec<BoundingBox> = (0..ng).map(|_| random_box(rng, 80)).collect();
        let preds = (0..np)
            .map(|_| {
                // half the predictions land near a ground-truth box
                let b = match gt.get(rng.random_range(0..gt.len().max(1) * 2)) {
                    Some(g) => BoundingBox::new(
                        (g.x() + rng.random_range(-6i32..=6) as f64).max(0.0),
                        (g.y() + rng.random_range(-6i32..=6) as f64).max(0.0),
                        g.w(),
                        g.h(),
                    )
                    .unwrap(),
                    None => random_box(rng, 80),
                };
                Detection::new(b, random_conf(rng), "F1", &id).unwrap()
            })
            .collect();
        out.push((preds, gt));
    }
    (out, [0.3, 0.5][rng.random_range(0..2)])
}
