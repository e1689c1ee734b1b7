//! Two-path defect detection.
//!
//! Surfaces: slice the image, run both surface models on every slice, drop
//! detections under the surface confidence threshold, project to the image
//! frame, keep only boxes that overlap a box from the other model by at
//! least the common-IoU threshold, then suppress duplicates with NMS.
//!
//! Threads: one full-image pass of the thread model, confidence filter, NMS.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{Detector, DetectorRegistry, Region};
use crate::error::{InspectError, Result};
use crate::geometry::{filter_by_confidence, iou, nms, Detection};
use crate::slicing::{compute_grid, compute_grid_fixed_tile, project_to_global, SliceGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GridSpec {
    FixedTile {
        rows: u32,
        cols: u32,
        tile_w: u32,
        tile_h: u32,
    },
    Overlap {
        rows: u32,
        cols: u32,
        overlap_ratio: f64,
    },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::FixedTile {
            rows: 2,
            cols: 2,
            tile_w: 1280,
            tile_h: 1071,
        }
    }
}

impl GridSpec {
    pub fn build(&self, image_w: u32, image_h: u32) -> Result<SliceGrid> {
        match *self {
            GridSpec::FixedTile {
                rows,
                cols,
                tile_w,
                tile_h,
            } => compute_grid_fixed_tile(image_w, image_h, rows, cols, tile_w, tile_h),
            GridSpec::Overlap {
                rows,
                cols,
                overlap_ratio,
            } => compute_grid(image_w, image_h, rows, cols, overlap_ratio),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub surface_conf_threshold: f64,
    pub thread_conf_threshold: f64,
    pub common_iou_threshold: f64,
    pub nms_threshold: f64,
    pub grid: GridSpec,
    pub image_w: u32,
    pub image_h: u32,
    pub surface_models: (String, String),
    pub thread_model: String,
    /// Also run both surface models on the whole image next to the slices.
    pub include_full_image: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            surface_conf_threshold: 0.7,
            thread_conf_threshold: 0.65,
            common_iou_threshold: 0.01,
            nms_threshold: 0.15,
            grid: GridSpec::default(),
            image_w: 2448,
            image_h: 2048,
            surface_models: ("F1".to_string(), "F2".to_string()),
            thread_model: "F3".to_string(),
            include_full_image: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("surface_conf_threshold", self.surface_conf_threshold),
            ("thread_conf_threshold", self.thread_conf_threshold),
            ("common_iou_threshold", self.common_iou_threshold),
            ("nms_threshold", self.nms_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(InspectError::usage(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.surface_models.0 == self.surface_models.1 {
            return Err(InspectError::usage("the two surface models must differ"));
        }
        self.grid.build(self.image_w, self.image_h)?;
        Ok(())
    }
}

/// A cross-model pair of overlapping detections.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub det_a: Detection,
    pub det_b: Detection,
    pub iou: f64,
}

/// Index form of [`match_common`]: every `(i, j, iou)` with
/// `iou(a[i], b[j]) >= s_t`, in `(i, j)` order.
pub fn match_common_indices(preds_a: &[Detection], preds_b: &[Detection], s_t: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (i, a) in preds_a.iter().enumerate() {
        for (j, b) in preds_b.iter().enumerate() {
            let v = iou(&a.bbox, &b.bbox);
            // disjoint boxes never count as common, even at s_t = 0
            if v > 0.0 && v >= s_t {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// All cross-model pairs whose IoU reaches `s_t`. A detection may appear in
/// several pairs.
pub fn match_common(preds_a: &[Detection], preds_b: &[Detection], s_t: f64) -> Vec<MatchedPair> {
    match_common_indices(preds_a, preds_b, s_t)
        .into_iter()
        .map(|(i, j, v)| MatchedPair {
            det_a: preds_a[i].clone(),
            det_b: preds_b[j].clone(),
            iou: v,
        })
        .collect()
}

/// Detector registry plus the thresholds that drive it.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    registry: DetectorRegistry,
    grid: SliceGrid,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, registry: DetectorRegistry) -> Result<Self> {
        config.validate()?;
        let grid = config.grid.build(config.image_w, config.image_h)?;
        Ok(Self { config, registry, grid })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn grid(&self) -> &SliceGrid {
        &self.grid
    }

    fn surface_regions(&self) -> Vec<Region> {
        let mut regions: Vec<Region> = self.grid.slices.iter().copied().map(Region::Slice).collect();
        if self.config.include_full_image {
            regions.push(Region::Full {
                w: self.config.image_w,
                h: self.config.image_h,
            });
        }
        regions
    }

    /// Per-model detections above the surface threshold, in the image frame,
    /// concatenated in slice order.
    pub fn surface_candidates(&self, image_id: &str) -> Result<(Vec<Detection>, Vec<Detection>)> {
        let (id_a, id_b) = &self.config.surface_models;
        let mut pools = self.sliced_candidates(image_id, &[id_a, id_b])?;
        let pool_b = pools.pop().unwrap_or_default();
        let pool_a = pools.pop().unwrap_or_default();
        Ok((pool_a, pool_b))
    }

    fn sliced_candidates(&self, image_id: &str, model_ids: &[&str]) -> Result<Vec<Vec<Detection>>> {
        let models = model_ids
            .iter()
            .map(|id| self.registry.get(id))
            .collect::<Result<Vec<_>>>()?;
        let threshold = self.config.surface_conf_threshold;

        let per_region: Vec<Vec<Vec<Detection>>> = self
            .surface_regions()
            .par_iter()
            .map(|region| {
                let run = |model: &Arc<dyn Detector>| -> Result<Vec<Detection>> {
                    let raw = model.detect(image_id, region)?;
                    let kept = filter_by_confidence(&raw, threshold);
                    match region {
                        Region::Full { .. } => Ok(kept),
                        Region::Slice(slice) => kept
                            .into_iter()
                            .map(|d| {
                                let global = project_to_global(slice, &d.bbox)?;
                                Ok(d.with_bbox(global).with_slice(slice.index()))
                            })
                            .collect(),
                    }
                };
                let attach = |e: InspectError| match region {
                    Region::Slice(s) => InspectError::Slice {
                        image_id: image_id.to_string(),
                        row: s.row,
                        col: s.col,
                        source: Box::new(e),
                    },
                    Region::Full { .. } => e,
                };
                models.iter().map(|m| run(m).map_err(attach)).collect()
            })
            .collect::<Result<_>>()?;

        let mut pools = vec![Vec::new(); models.len()];
        for region in per_region {
            for (pool, dets) in pools.iter_mut().zip(region) {
                pool.extend(dets);
            }
        }
        Ok(pools)
    }

    /// Sliced inference with a single model: the surface path without the
    /// cross-model agreement step. Serves as the single-model baseline.
    pub fn run_sliced(&self, image_id: &str, model_id: &str) -> Result<Vec<Detection>> {
        let pool = self.sliced_candidates(image_id, &[model_id])?.pop().unwrap_or_default();
        Ok(nms(&pool, self.config.nms_threshold))
    }

    /// Sliced two-model ensemble for a surface image.
    pub fn run_surface(&self, image_id: &str) -> Result<Vec<Detection>> {
        let (pool_a, pool_b) = self.surface_candidates(image_id)?;
        let pairs = match_common_indices(&pool_a, &pool_b, self.config.common_iou_threshold);

        let from_a: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
        let from_b: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        let common: Vec<Detection> = from_a
            .into_iter()
            .map(|i| pool_a[i].clone())
            .chain(from_b.into_iter().map(|j| pool_b[j].clone()))
            .collect();
        Ok(nms(&common, self.config.nms_threshold))
    }

    /// Single-model full-image pass for a thread image.
    pub fn run_thread(&self, image_id: &str) -> Result<Vec<Detection>> {
        let model = self.registry.get(&self.config.thread_model)?;
        let region = Region::Full {
            w: self.config.image_w,
            h: self.config.image_h,
        };
        let raw = model.detect(image_id, &region)?;
        let kept = filter_by_confidence(&raw, self.config.thread_conf_threshold);
        Ok(nms(&kept, self.config.nms_threshold))
    }
}
