//! Capture planning: which images to take of each view and how long it takes.
//!
//! Every thread is imaged five times: once from above its center and four
//! more times along a cross-shaped path around it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{InspectError, Result};
use crate::measurement::InspectionKind;

pub const IMAGES_PER_THREAD: u32 = 5;

/// Inspected sides of the part, in inspection order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Rear,
    Front,
    Left,
    Right,
    Bottom,
}

impl View {
    pub const ALL: [View; 5] = [View::Rear, View::Front, View::Left, View::Right, View::Bottom];

    pub fn as_str(&self) -> &'static str {
        match self {
            View::Rear => "rear",
            View::Front => "front",
            View::Left => "left",
            View::Right => "right",
            View::Bottom => "bottom",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            View::Rear => "Rear",
            View::Front => "Front",
            View::Left => "Left",
            View::Right => "Right",
            View::Bottom => "Bottom",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = InspectError;

    fn from_str(s: &str) -> Result<Self> {
        View::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| InspectError::usage(format!("unknown view {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub view: View,
    pub surface_images: u32,
    #[serde(default)]
    pub thread_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanTiming {
    pub seconds_per_thread: f64,
    pub surface_total_seconds: f64,
}

impl Default for ScanTiming {
    fn default() -> Self {
        Self {
            seconds_per_thread: 5.0,
            surface_total_seconds: 34.75,
        }
    }
}

/// Camera placement for one capture, symbolic rather than a robot pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CapturePattern {
    GridCell(u32),
    ThreadCenter,
    /// Arm of the cross around a thread, 1 to 4.
    ThreadCross(u8),
}

impl fmt::Display for CapturePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CapturePattern::GridCell(i) => write!(f, "grid-cell-{i}"),
            CapturePattern::ThreadCenter => f.write_str("thread-center"),
            CapturePattern::ThreadCross(n) => write!(f, "thread-cross-{n}"),
        }
    }
}

impl FromStr for CapturePattern {
    type Err = InspectError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || InspectError::usage(format!("unknown capture pattern {s:?}"));
        if s == "thread-center" {
            Ok(CapturePattern::ThreadCenter)
        } else if let Some(n) = s.strip_prefix("thread-cross-") {
            match n.parse::<u8>() {
                Ok(n @ 1..=4) => Ok(CapturePattern::ThreadCross(n)),
                _ => Err(bad()),
            }
        } else if let Some(i) = s.strip_prefix("grid-cell-") {
            i.parse().map(CapturePattern::GridCell).map_err(|_| bad())
        } else {
            Err(bad())
        }
    }
}

impl Serialize for CapturePattern {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CapturePattern {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capture {
    pub view: View,
    pub kind: InspectionKind,
    /// 1-based position among captures of this kind within the view.
    pub index: u32,
    pub pattern: CapturePattern,
    /// `"<view>-T<n>"` for thread captures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thread_id: Option<String>,
}

impl Capture {
    /// Short identifier unique within a part, e.g. `rear.S3` or
    /// `front.T12.cross-2`.
    pub fn key(&self) -> String {
        match (&self.pattern, &self.thread_id) {
            (CapturePattern::GridCell(i), _) => format!("{}.S{i}", self.view),
            (CapturePattern::ThreadCenter, Some(t)) => {
                format!("{}.{}.center", self.view, thread_suffix(t))
            }
            (CapturePattern::ThreadCross(n), Some(t)) => {
                format!("{}.{}.cross-{n}", self.view, thread_suffix(t))
            }
            (_, None) => format!("{}.{}", self.view, self.pattern),
        }
    }
}

fn thread_suffix(thread_id: &str) -> &str {
    thread_id.rsplit('-').next().unwrap_or(thread_id)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScanPlan {
    pub captures: Vec<Capture>,
    pub estimated_seconds: f64,
    pub thread_seconds: f64,
}

impl ScanPlan {
    pub fn thread_count(&self) -> usize {
        self.captures
            .iter()
            .filter_map(|c| c.thread_id.as_deref())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// Lay out captures view by view in inspection order, surfaces before
/// threads, and estimate acquisition time.
pub fn build_plan(views: &[ViewSpec], timing: &ScanTiming) -> Result<ScanPlan> {
    if views.is_empty() {
        return Err(InspectError::usage("scan plan needs at least one view"));
    }
    let mut sorted = views.to_vec();
    sorted.sort_by_key(|v| v.view);
    if let Some(w) = sorted.windows(2).find(|w| w[0].view == w[1].view) {
        return Err(InspectError::usage(format!("view {} listed twice", w[0].view)));
    }

    let mut captures = Vec::new();
    let mut threads = 0u32;
    for spec in &sorted {
        for i in 1..=spec.surface_images {
            captures.push(Capture {
                view: spec.view,
                kind: InspectionKind::Surface,
                index: i,
                pattern: CapturePattern::GridCell(i),
                thread_id: None,
            });
        }
        let mut index = 0;
        for t in 1..=spec.thread_count {
            let thread_id = format!("{}-T{t}", spec.view);
            let patterns =
                std::iter::once(CapturePattern::ThreadCenter).chain((1..=4).map(CapturePattern::ThreadCross));
            for pattern in patterns {
                index += 1;
                captures.push(Capture {
                    view: spec.view,
                    kind: InspectionKind::Thread,
                    index,
                    pattern,
                    thread_id: Some(thread_id.clone()),
                });
            }
        }
        threads += spec.thread_count;
    }
    let thread_seconds = timing.seconds_per_thread * threads as f64;
    Ok(ScanPlan {
        captures,
        estimated_seconds: timing.surface_total_seconds + thread_seconds,
        thread_seconds,
    })
}

/// One line of the per-view image count table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlanRow {
    pub view: View,
    pub surface_images: u32,
    pub threads: u32,
    pub thread_images: u32,
    pub total: u32,
}

impl fmt::Display for PlanRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {}, {}, {}, {}",
            self.view.title(),
            self.surface_images,
            self.threads,
            self.thread_images,
            self.total
        )
    }
}

pub const PLAN_TABLE_HEADER: &str = "View, Surface Images, No of Threads, Thread Images, Total";

pub fn summarize_plan(plan: &ScanPlan) -> Vec<PlanRow> {
    let mut rows: BTreeMap<View, (PlanRow, BTreeSet<&str>)> = BTreeMap::new();
    for c in &plan.captures {
        let (row, threads) = rows.entry(c.view).or_insert_with(|| {
            (
                PlanRow {
                    view: c.view,
                    surface_images: 0,
                    threads: 0,
                    thread_images: 0,
                    total: 0,
                },
                BTreeSet::new(),
            )
        });
        match c.kind {
            InspectionKind::Surface => row.surface_images += 1,
            InspectionKind::Thread => {
                row.thread_images += 1;
                if let Some(t) = c.thread_id.as_deref() {
                    threads.insert(t);
                }
            }
        }
        row.total += 1;
    }
    rows.into_values()
        .map(|(mut row, threads)| {
            row.threads = threads.len() as u32;
            row
        })
        .collect()
}

/// Header, one line per view and a totals line (omitted for an empty plan).
pub fn render_plan_table(rows: &[PlanRow]) -> String {
    let mut out = String::from(PLAN_TABLE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    if !rows.is_empty() {
        let sum = |f: fn(&PlanRow) -> u32| rows.iter().map(f).sum::<u32>();
        out.push_str(&format!(
            "Total, {}, {}, {}, {}\n",
            sum(|r| r.surface_images),
            sum(|r| r.threads),
            sum(|r| r.thread_images),
            sum(|r| r.total)
        ));
    }
    out
}
