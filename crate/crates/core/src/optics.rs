//! Camera and lens sizing.
//!
//! Required sensor resolution follows from the field of view and how many
//! pixels the smallest feature must span; the focal length then follows from
//! the working distance, that resolution and the pixel pitch.

use serde::{Deserialize, Serialize};

use crate::error::{InspectError, Result};

/// Sensor widths commonly available for area-scan cameras, in pixels.
pub const STANDARD_SENSOR_WIDTHS: [u32; 3] = [2048, 2448, 4096];
/// Stock fixed focal lengths, in millimeters.
pub const STANDARD_FOCAL_LENGTHS: [f64; 4] = [4.0, 6.0, 8.0, 12.0];

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(InspectError::usage(format!("{name} must be positive, got {v}")))
    }
}

/// Pixels needed across the field of view.
pub fn required_resolution(fov_mm: f64, min_feature_px: f64, min_feature_mm: f64) -> Result<f64> {
    positive("fov_mm", fov_mm)?;
    positive("min_feature_px", min_feature_px)?;
    positive("min_feature_mm", min_feature_mm)?;
    Ok(fov_mm * min_feature_px / min_feature_mm)
}

/// Focal length in millimeters. `pixel_size_mm` is the sensor pixel pitch.
pub fn required_focal_length(wd_mm: f64, resolution_px: f64, pixel_size_mm: f64, fov_mm: f64) -> Result<f64> {
    positive("working_distance_mm", wd_mm)?;
    positive("resolution_px", resolution_px)?;
    positive("pixel_size_mm", pixel_size_mm)?;
    positive("fov_mm", fov_mm)?;
    Ok(wd_mm * resolution_px * pixel_size_mm / fov_mm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticsSpec {
    pub fov_mm: f64,
    pub min_feature_mm: f64,
    pub min_feature_px: f64,
    pub working_distance_mm: f64,
    pub sensor_resolution_px: f64,
    pub pixel_size_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpticsPlan {
    pub required_resolution_px: f64,
    pub focal_length_mm: f64,
    /// Smallest stock sensor width meeting the requirement, if any.
    pub suggested_sensor_px: Option<u32>,
    pub suggested_focal_length_mm: f64,
}

/// Evaluate both formulas for a spec. The focal length uses the chosen
/// sensor's resolution, not the minimum requirement.
pub fn plan_optics(spec: &OpticsSpec) -> Result<OpticsPlan> {
    let required = required_resolution(spec.fov_mm, spec.min_feature_px, spec.min_feature_mm)?;
    let focal = required_focal_length(
        spec.working_distance_mm,
        spec.sensor_resolution_px,
        spec.pixel_size_mm,
        spec.fov_mm,
    )?;
    Ok(OpticsPlan {
        required_resolution_px: required,
        focal_length_mm: focal,
        suggested_sensor_px: STANDARD_SENSOR_WIDTHS.iter().copied().find(|&w| w as f64 >= required),
        suggested_focal_length_mm: nearest_focal_length(focal),
    })
}

pub fn nearest_focal_length(focal_mm: f64) -> f64 {
    STANDARD_FOCAL_LENGTHS
        .iter()
        .copied()
        .min_by(|a, b| (a - focal_mm).abs().total_cmp(&(b - focal_mm).abs()))
        .expect("non-empty table")
}
