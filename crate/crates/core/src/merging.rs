//! Proximity merging of detections.
//!
//! Detections whose centers lie within a pixel distance of each other are
//! clustered with single linkage and each cluster is replaced by the box
//! spanning all of its members, carrying the highest member confidence.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{InspectError, Result};
use crate::geometry::{center_distance, union_box, BoundingBox, Detection};
use crate::measurement::InspectionKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    pub surface_distance_px: f64,
    pub thread_distance_px: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            surface_distance_px: 20.0,
            thread_distance_px: 120.0,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.surface_distance_px >= 0.0 && self.thread_distance_px >= 0.0) {
            return Err(InspectError::usage("merge distances must be non-negative"));
        }
        Ok(())
    }

    pub fn distance_for(&self, kind: InspectionKind) -> f64 {
        match kind {
            InspectionKind::Surface => self.surface_distance_px,
            InspectionKind::Thread => self.thread_distance_px,
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn position_order(a: &Detection, b: &Detection) -> Ordering {
    a.bbox
        .x()
        .total_cmp(&b.bbox.x())
        .then_with(|| a.bbox.y().total_cmp(&b.bbox.y()))
        .then_with(|| a.bbox.w().total_cmp(&b.bbox.w()))
        .then_with(|| a.bbox.h().total_cmp(&b.bbox.h()))
        .then_with(|| b.confidence().total_cmp(&a.confidence()))
        .then_with(|| a.model_id.cmp(&b.model_id))
}

/// Merge detections whose centers are at most `distance_px` apart
/// (transitively). Output is ordered by x, then y.
pub fn merge_close(dets: &[Detection], distance_px: f64) -> Vec<Detection> {
    let n = dets.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if center_distance(&dets[i].bbox, &dets[j].bbox) <= distance_px {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let root = find(&mut parent, i);
        clusters[root].push(i);
    }

    let mut out: Vec<Detection> = clusters
        .into_iter()
        .filter(|c| !c.is_empty())
        .map(|members| {
            if members.len() == 1 {
                return dets[members[0]].clone();
            }
            // representative: highest confidence, ties resolved by position
            let best = members
                .iter()
                .map(|&i| &dets[i])
                .min_by(|a, b| {
                    b.confidence()
                        .total_cmp(&a.confidence())
                        .then_with(|| position_order(a, b))
                })
                .expect("cluster is non-empty");
            let boxes: Vec<BoundingBox> = members.iter().map(|&i| dets[i].bbox).collect();
            let mut merged = best.clone().with_bbox(union_box(&boxes).expect("cluster is non-empty"));
            merged.slice = None;
            merged
        })
        .collect();
    out.sort_by(position_order);
    out
}
