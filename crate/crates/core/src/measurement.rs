//! Defect size estimation and severity grading.
//!
//! A defect's diameter in pixels is approximated from its box as
//! `sqrt(sqrt(w² + h²) · max(w, h))`, which always lies between the longer
//! side and the diagonal. Pixels become millimeters through the ratio
//! measured on a reference marker of known size.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{InspectError, Result};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InspectionKind {
    Surface,
    Thread,
}

impl InspectionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            InspectionKind::Surface => "surface",
            InspectionKind::Thread => "thread",
        }
    }
}

impl fmt::Display for InspectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Approximate defect diameter in pixels.
pub fn defect_size_px(bbox: &BoundingBox) -> f64 {
    (bbox.diagonal() * bbox.w().max(bbox.h())).sqrt()
}

/// Millimeter-per-pixel calibration from a reference marker.
///
/// Only the reference measurements are stored; the ratio is always derived
/// from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationEntry", into = "CalibrationEntry")]
pub struct CalibrationRecord {
    reference_mm: f64,
    reference_px: f64,
    kind: InspectionKind,
    part_type: String,
}

impl CalibrationRecord {
    pub fn reference_mm(&self) -> f64 {
        self.reference_mm
    }

    pub fn reference_px(&self) -> f64 {
        self.reference_px
    }

    pub fn kind(&self) -> InspectionKind {
        self.kind
    }

    pub fn part_type(&self) -> &str {
        &self.part_type
    }

    pub fn ratio_mm_per_px(&self) -> f64 {
        self.reference_mm / self.reference_px
    }
}

/// Build a calibration from the known marker size and its measured size in
/// pixels.
pub fn calibrate(
    reference_mm: f64,
    reference_px: f64,
    kind: InspectionKind,
    part_type: impl Into<String>,
) -> Result<CalibrationRecord> {
    if !(reference_mm > 0.0 && reference_mm.is_finite()) || !(reference_px > 0.0 && reference_px.is_finite()) {
        return Err(InspectError::usage(format!(
            "calibration needs positive sizes, got {reference_mm} mm / {reference_px} px"
        )));
    }
    Ok(CalibrationRecord {
        reference_mm,
        reference_px,
        kind,
        part_type: part_type.into(),
    })
}

/// Build a calibration that reproduces a recorded mm/px ratio: the marker
/// pixel size is back-computed from `reference_mm / ratio`.
pub fn calibrate_from_ratio(
    reference_mm: f64,
    ratio_mm_per_px: f64,
    kind: InspectionKind,
    part_type: impl Into<String>,
) -> Result<CalibrationRecord> {
    if !(ratio_mm_per_px > 0.0 && ratio_mm_per_px.is_finite()) {
        return Err(InspectError::usage(format!("ratio {ratio_mm_per_px} must be positive")));
    }
    calibrate(reference_mm, reference_mm / ratio_mm_per_px, kind, part_type)
}

/// File form of a calibration: either the measured marker size in pixels or
/// a recorded ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationEntry {
    pub reference_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_mm_per_px: Option<f64>,
    pub kind: InspectionKind,
    pub part_type: String,
}

impl TryFrom<CalibrationEntry> for CalibrationRecord {
    type Error = InspectError;

    fn try_from(e: CalibrationEntry) -> Result<Self> {
        match (e.reference_px, e.ratio_mm_per_px) {
            (Some(px), _) => calibrate(e.reference_mm, px, e.kind, e.part_type),
            (None, Some(ratio)) => calibrate_from_ratio(e.reference_mm, ratio, e.kind, e.part_type),
            (None, None) => Err(InspectError::usage("calibration needs reference_px or ratio_mm_per_px")),
        }
    }
}

impl From<CalibrationRecord> for CalibrationEntry {
    fn from(c: CalibrationRecord) -> Self {
        Self {
            reference_mm: c.reference_mm,
            reference_px: Some(c.reference_px),
            ratio_mm_per_px: None,
            kind: c.kind,
            part_type: c.part_type,
        }
    }
}

/// Convert a pixel size to millimeters.
pub fn px_to_mm(size_px: f64, cal: &CalibrationRecord) -> f64 {
    size_px * cal.reference_mm / cal.reference_px
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Inconsiderable,
    Borderline,
    Considerable,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Inconsiderable => "inconsiderable",
            Severity::Borderline => "borderline",
            Severity::Considerable => "considerable",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = InspectError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inconsiderable" => Ok(Severity::Inconsiderable),
            "borderline" => Ok(Severity::Borderline),
            "considerable" => Ok(Severity::Considerable),
            other => Err(InspectError::usage(format!("unknown severity {other:?}"))),
        }
    }
}

/// Acceptance limit plus the band routed to a human reviewer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityPolicy {
    pub max_accepted_mm: f64,
    pub review_band_mm: (f64, f64),
}

impl Default for SeverityPolicy {
    fn default() -> Self {
        Self {
            max_accepted_mm: 2.0,
            review_band_mm: (1.6, 2.4),
        }
    }
}

impl SeverityPolicy {
    pub fn new(max_accepted_mm: f64, low: f64, high: f64) -> Result<Self> {
        let p = Self {
            max_accepted_mm,
            review_band_mm: (low, high),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (low, high) = self.review_band_mm;
        if !(low <= self.max_accepted_mm && self.max_accepted_mm <= high) {
            return Err(InspectError::usage(format!(
                "review band [{low}, {high}] must contain the limit {}",
                self.max_accepted_mm
            )));
        }
        Ok(())
    }
}

/// Grade a measured size. The review band (inclusive) takes precedence over
/// the acceptance limit.
pub fn classify_severity(size_mm: f64, policy: &SeverityPolicy) -> Severity {
    let (low, high) = policy.review_band_mm;
    if size_mm >= low && size_mm <= high {
        Severity::Borderline
    } else if size_mm > policy.max_accepted_mm {
        Severity::Considerable
    } else {
        Severity::Inconsiderable
    }
}

/// Size and grade of one box under one calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub size_px: f64,
    pub size_mm: f64,
    pub severity: Severity,
}

pub fn measure(bbox: &BoundingBox, cal: &CalibrationRecord, policy: &SeverityPolicy) -> Measurement {
    let size_px = defect_size_px(bbox);
    let size_mm = px_to_mm(size_px, cal);
    Measurement {
        size_px,
        size_mm,
        severity: classify_severity(size_mm, policy),
    }
}
