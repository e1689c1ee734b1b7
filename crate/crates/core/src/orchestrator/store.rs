//! Report persistence and the review store behind the HTTP service.
//!
//! Each part owns `<part_id>.csv` and `<part_id>.report.json`, both replaced
//! atomically on every change. `parts_index.csv` is only ever appended to.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use super::csv::render_csv;
use super::report::{apply_verdict, InspectionReport, MeasuredDefect, PartStatus, ReviewVerdict, Verdict};
use crate::error::{InspectError, Result};
use crate::measurement::Severity;

pub const INDEX_FILE: &str = "parts_index.csv";
const INDEX_HEADER: &str =
    "part_id,part_type,part_status,defects,considerable,borderline,inconsiderable,created_at,config_digest,event,recorded_at\n";

pub fn csv_path(dir: &Path, part_id: &str) -> PathBuf {
    dir.join(format!("{part_id}.csv"))
}

pub fn json_path(dir: &Path, part_id: &str) -> PathBuf {
    dir.join(format!("{part_id}.report.json"))
}

fn write_atomic(dir: &Path, target: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(target).map_err(|e| InspectError::Io(e.error))?;
    Ok(())
}

/// Write the part CSV and JSON sidecar, each via temp file plus rename.
pub fn write_report(dir: &Path, report: &InspectionReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    write_atomic(dir, &json_path(dir, &report.part_id), &json)?;
    write_atomic(dir, &csv_path(dir, &report.part_id), render_csv(report)?.as_bytes())?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<InspectionReport> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Append one line describing the report's current state to the index.
pub fn append_index(dir: &Path, report: &InspectionReport, event: &str, recorded_at: DateTime<Utc>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(INDEX_FILE);
    let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
    if file.metadata()?.len() == 0 {
        file.write_all(INDEX_HEADER.as_bytes())?;
    }
    let counts = report.severity_counts();
    let n = |s| counts.get(&s).copied().unwrap_or(0).to_string();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        report.part_id.as_str(),
        &report.part_type,
        report.part_status.as_str(),
        &report.defects.len().to_string(),
        &n(Severity::Considerable),
        &n(Severity::Borderline),
        &n(Severity::Inconsiderable),
        &report.created_at.to_rfc3339_opts(SecondsFormat::Secs, true),
        &report.config_digest,
        event,
        &recorded_at.to_rfc3339_opts(SecondsFormat::Secs, true),
    ])?;
    let line = w.into_inner().map_err(|e| InspectError::Io(e.into_error()))?;
    file.write_all(&line)?;
    Ok(())
}

/// Save a freshly produced report and log it in the index.
pub fn save_inspection(dir: &Path, report: &InspectionReport) -> Result<()> {
    write_report(dir, report)?;
    append_index(dir, report, "inspected", report.created_at)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityCounts {
    pub considerable: usize,
    pub borderline: usize,
    pub inconsiderable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSummary {
    pub part_id: String,
    pub part_type: String,
    pub part_status: PartStatus,
    pub defect_counts: SeverityCounts,
}

impl From<&InspectionReport> for PartSummary {
    fn from(r: &InspectionReport) -> Self {
        let counts = r.severity_counts();
        let n = |s| counts.get(&s).copied().unwrap_or(0);
        Self {
            part_id: r.part_id.clone(),
            part_type: r.part_type.clone(),
            part_status: r.part_status,
            defect_counts: SeverityCounts {
                considerable: n(Severity::Considerable),
                borderline: n(Severity::Borderline),
                inconsiderable: n(Severity::Inconsiderable),
            },
        }
    }
}

/// Reports of a directory held in memory. Reads run concurrently; verdict
/// writes are serialized.
#[derive(Debug)]
pub struct ReviewStore {
    dir: PathBuf,
    reports: RwLock<BTreeMap<String, InspectionReport>>,
    writer: Mutex<()>,
}

impl ReviewStore {
    /// Load every `*.report.json` in `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let mut reports = BTreeMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            let is_report = path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".report.json"));
            if is_report {
                let r = read_report(&path)?;
                reports.insert(r.part_id.clone(), r);
            }
        }
        Ok(Self {
            dir,
            reports: RwLock::new(reports),
            writer: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn parts(&self) -> Vec<PartSummary> {
        let reports = self.reports.read().unwrap_or_else(|p| p.into_inner());
        reports.values().map(PartSummary::from).collect()
    }

    pub fn report(&self, part_id: &str) -> Result<InspectionReport> {
        let reports = self.reports.read().unwrap_or_else(|p| p.into_inner());
        reports
            .get(part_id)
            .cloned()
            .ok_or_else(|| InspectError::lookup(format!("unknown part {part_id}")))
    }

    pub fn defects(&self, part_id: &str, severity: Option<Severity>) -> Result<Vec<MeasuredDefect>> {
        Ok(self
            .report(part_id)?
            .defects
            .into_iter()
            .filter(|d| severity.is_none_or(|s| d.severity == s))
            .collect())
    }

    /// Apply a verdict, persist the part and return its updated report.
    pub fn submit(
        &self,
        defect_id: &str,
        verdict: Verdict,
        reviewer: &str,
        timestamp: DateTime<Utc>,
    ) -> Result<InspectionReport> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let current = {
            let reports = self.reports.read().unwrap_or_else(|p| p.into_inner());
            reports
                .values()
                .find(|r| r.defect(defect_id).is_some())
                .cloned()
                .ok_or_else(|| InspectError::lookup(format!("unknown defect {defect_id}")))?
        };
        let next = apply_verdict(
            &current,
            ReviewVerdict {
                defect_id: defect_id.to_string(),
                verdict,
                reviewer: reviewer.to_string(),
                timestamp,
            },
        )?;
        write_report(&self.dir, &next)?;
        append_index(&self.dir, &next, "verdict", timestamp)?;
        self.reports
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(next.part_id.clone(), next.clone());
        Ok(next)
    }
}
