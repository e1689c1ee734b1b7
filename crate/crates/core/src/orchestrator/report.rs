use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{InspectError, Result};
use crate::evaluation::{Prediction, PredictionSet};
use crate::geometry::BoundingBox;
use crate::measurement::{CalibrationRecord, InspectionKind, Severity};
use crate::scan::View;

/// Number of decimals kept for every real stored in a report.
pub const REPORT_DECIMALS: i32 = 4;

/// Round to the report precision. The result formats back to the same
/// decimal string and parses back to the same bits.
pub fn quantize(v: f64) -> f64 {
    let scale = 10f64.powi(REPORT_DECIMALS);
    let q = (v * scale).round() / scale;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Reject => "reject",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = InspectError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accept" => Ok(Verdict::Accept),
            "reject" => Ok(Verdict::Reject),
            _ => Err(InspectError::usage(format!("unknown verdict {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewVerdict {
    pub defect_id: String,
    pub verdict: Verdict,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

impl ReviewVerdict {
    /// Conflict order: later timestamp wins; reviewer and verdict break
    /// exact ties so the outcome never depends on arrival order.
    fn supersedes(&self, other: &ReviewVerdict) -> bool {
        (self.timestamp, &self.reviewer, self.verdict.as_str())
            > (other.timestamp, &other.reviewer, other.verdict.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartStatus {
    Accepted,
    Rejected,
    PendingReview,
    /// At least one capture could not be processed.
    Incomplete,
}

impl PartStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PartStatus::Accepted => "accepted",
            PartStatus::Rejected => "rejected",
            PartStatus::PendingReview => "pending-review",
            PartStatus::Incomplete => "incomplete",
        }
    }
}

impl fmt::Display for PartStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PartStatus {
    type Err = InspectError;

    fn from_str(s: &str) -> Result<Self> {
        [
            PartStatus::Accepted,
            PartStatus::Rejected,
            PartStatus::PendingReview,
            PartStatus::Incomplete,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
        .ok_or_else(|| InspectError::usage(format!("unknown part status {s:?}")))
    }
}

/// One merged, measured defect. Reals are stored at report precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredDefect {
    pub defect_id: String,
    pub view: View,
    pub kind: InspectionKind,
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread_id: Option<String>,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub size_px: f64,
    pub size_mm: f64,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureFailure {
    pub image_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionReport {
    pub part_id: String,
    pub part_type: String,
    pub calibrations: Vec<CalibrationRecord>,
    pub defects: Vec<MeasuredDefect>,
    pub part_status: PartStatus,
    pub created_at: DateTime<Utc>,
    pub config_digest: String,
    #[serde(default)]
    pub failures: Vec<CaptureFailure>,
    /// Every verdict ever submitted, in arrival order.
    #[serde(default)]
    pub verdicts: Vec<ReviewVerdict>,
}

/// Status rule: any considerable defect or rejected borderline defect
/// rejects the part; otherwise an unreviewed borderline defect holds it for
/// review; otherwise it is accepted. Failed captures override everything.
pub fn part_status(defects: &[MeasuredDefect], incomplete: bool) -> PartStatus {
    if incomplete {
        return PartStatus::Incomplete;
    }
    let rejected = defects.iter().any(|d| match d.severity {
        Severity::Considerable => true,
        Severity::Borderline => d.verdict == Some(Verdict::Reject),
        Severity::Inconsiderable => false,
    });
    if rejected {
        PartStatus::Rejected
    } else if defects
        .iter()
        .any(|d| d.severity == Severity::Borderline && d.verdict.is_none())
    {
        PartStatus::PendingReview
    } else {
        PartStatus::Accepted
    }
}

/// The effective verdict per defect from an unordered verdict history.
pub fn effective_verdicts(history: &[ReviewVerdict]) -> BTreeMap<&str, &ReviewVerdict> {
    let mut out: BTreeMap<&str, &ReviewVerdict> = BTreeMap::new();
    for v in history {
        match out.get(v.defect_id.as_str()) {
            Some(cur) if !v.supersedes(cur) => {}
            _ => {
                out.insert(&v.defect_id, v);
            }
        }
    }
    out
}

impl InspectionReport {
    pub fn defect(&self, defect_id: &str) -> Option<&MeasuredDefect> {
        self.defects.iter().find(|d| d.defect_id == defect_id)
    }

    pub fn severity_counts(&self) -> BTreeMap<Severity, usize> {
        let mut counts = BTreeMap::new();
        for d in &self.defects {
            *counts.entry(d.severity).or_insert(0) += 1;
        }
        counts
    }

    /// Re-derive every defect verdict and the part status from the verdict
    /// history.
    pub fn recompute(&mut self) {
        let effective: BTreeMap<String, Verdict> = effective_verdicts(&self.verdicts)
            .into_iter()
            .map(|(id, v)| (id.to_string(), v.verdict))
            .collect();
        for d in &mut self.defects {
            d.verdict = effective.get(&d.defect_id).copied();
        }
        self.part_status = part_status(&self.defects, !self.failures.is_empty());
    }

    /// Detections in the shape the evaluator consumes.
    pub fn predictions(&self) -> PredictionSet {
        let mut set = PredictionSet::default();
        for d in &self.defects {
            set.images.entry(d.image_id.clone()).or_default().push(Prediction {
                bbox: d.bbox,
                conf: d.confidence,
                size_mm: Some(d.size_mm),
            });
        }
        set
    }
}

/// Record a supervisor verdict on a borderline defect and recompute the
/// part status.
pub fn apply_verdict(report: &InspectionReport, verdict: ReviewVerdict) -> Result<InspectionReport> {
    let defect = report
        .defect(&verdict.defect_id)
        .ok_or_else(|| InspectError::lookup(format!("defect {} not in part {}", verdict.defect_id, report.part_id)))?;
    if defect.severity != Severity::Borderline {
        return Err(InspectError::usage(format!(
            "defect {} is {}, only borderline defects take verdicts",
            defect.defect_id, defect.severity
        )));
    }
    if verdict.reviewer.trim().is_empty() {
        return Err(InspectError::usage("verdict needs a reviewer"));
    }
    let mut next = report.clone();
    next.verdicts.push(verdict);
    next.recompute();
    Ok(next)
}

/// Per-thread detection summary across the five captures of each thread.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadHits {
    pub thread_id: String,
    pub view: View,
    /// Distinct captures of this thread with at least one defect.
    pub hit_count: usize,
    pub image_ids: Vec<String>,
}

/// Threads with at least one detected defect, ordered by thread id.
pub fn thread_recall_rollup(report: &InspectionReport) -> Vec<ThreadHits> {
    let mut by_thread: BTreeMap<&str, (View, Vec<String>)> = BTreeMap::new();
    for d in &report.defects {
        if let Some(t) = &d.thread_id {
            let entry = by_thread.entry(t).or_insert((d.view, Vec::new()));
            if !entry.1.contains(&d.image_id) {
                entry.1.push(d.image_id.clone());
            }
        }
    }
    by_thread
        .into_iter()
        .map(|(thread_id, (view, mut image_ids))| {
            image_ids.sort();
            ThreadHits {
                thread_id: thread_id.to_string(),
                view,
                hit_count: image_ids.len(),
                image_ids,
            }
        })
        .collect()
}
