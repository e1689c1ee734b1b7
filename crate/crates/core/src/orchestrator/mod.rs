//! End-to-end part inspection: scan plan, detection, merging, measurement,
//! part classification, report persistence and supervisor review.

pub mod csv;
pub mod report;
pub mod store;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::{DetectorRegistry, ExternalDetector, ReplayDetector, ReplayFixture};
use crate::ensemble::{Pipeline, PipelineConfig};
use crate::error::{InspectError, Result};
use crate::geometry::{BoundingBox, Detection};
use crate::measurement::{
    classify_severity, defect_size_px, px_to_mm, CalibrationRecord, InspectionKind, SeverityPolicy,
};
use crate::merging::{merge_close, MergeConfig};
use crate::scan::{build_plan, Capture, ScanPlan, ScanTiming, View, ViewSpec};

pub use report::{
    apply_verdict, effective_verdicts, part_status, quantize, thread_recall_rollup, CaptureFailure, InspectionReport,
    MeasuredDefect, PartStatus, ReviewVerdict, ThreadHits, Verdict,
};
pub use store::{PartSummary, ReviewStore};

/// A part to inspect: its identity, scan layout and calibrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartDescription {
    pub part_id: String,
    pub part_type: String,
    pub views: Vec<ViewSpec>,
    #[serde(default)]
    pub timing: ScanTiming,
    pub calibrations: Vec<CalibrationRecord>,
}

impl PartDescription {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn calibration(&self, kind: InspectionKind) -> Result<&CalibrationRecord> {
        self.calibrations
            .iter()
            .find(|c| c.kind() == kind)
            .ok_or_else(|| InspectError::lookup(format!("part {} has no {kind} calibration", self.part_id)))
    }

    /// Check identifiers and calibrations, and build the scan plan.
    pub fn plan(&self) -> Result<ScanPlan> {
        let id_ok = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !id_ok(&self.part_id) {
            return Err(InspectError::usage(format!(
                "part id {:?} must be non-empty ASCII letters, digits, '-' or '_'",
                self.part_id
            )));
        }
        for (i, c) in self.calibrations.iter().enumerate() {
            if c.part_type() != self.part_type {
                return Err(InspectError::usage(format!(
                    "{} calibration is for part type {}, part is {}",
                    c.kind(),
                    c.part_type(),
                    self.part_type
                )));
            }
            if self.calibrations[..i].iter().any(|o| o.kind() == c.kind()) {
                return Err(InspectError::usage(format!("duplicate {} calibration", c.kind())));
            }
        }
        let plan = build_plan(&self.views, &self.timing)?;
        for kind in [InspectionKind::Surface, InspectionKind::Thread] {
            if plan.captures.iter().any(|c| c.kind == kind) {
                self.calibration(kind).map_err(|e| InspectError::usage(e.to_string()))?;
            }
        }
        Ok(plan)
    }
}

/// Image identifier of a capture: `<part_id>.<capture key>`.
pub fn image_id(part_id: &str, capture: &Capture) -> String {
    format!("{part_id}.{}", capture.key())
}

/// Recover view, kind and thread id from an image identifier.
pub fn parse_image_id(part_id: &str, image_id: &str) -> Result<(View, InspectionKind, Option<String>)> {
    let bad = || InspectError::usage(format!("image id {image_id:?} does not belong to part {part_id}"));
    let rest = image_id
        .strip_prefix(part_id)
        .and_then(|r| r.strip_prefix('.'))
        .ok_or_else(bad)?;
    let parts: Vec<&str> = rest.split('.').collect();
    match parts.as_slice() {
        [view, s] if s.starts_with('S') => Ok((view.parse()?, InspectionKind::Surface, None)),
        [view, t, _] if t.starts_with('T') => {
            let view: View = view.parse()?;
            Ok((view, InspectionKind::Thread, Some(format!("{view}-{t}"))))
        }
        _ => Err(bad()),
    }
}

fn default_timeout_ms() -> u64 {
    30_000
}

/// Where a model's detections come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Recorded detections from the fixture file.
    Replay,
    /// A worker process spoken to over stdin/stdout.
    Process {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
    /// A worker listening on a TCP address.
    Tcp {
        addr: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InspectionConfig {
    pub pipeline: PipelineConfig,
    pub merge: MergeConfig,
    pub severity: SeverityPolicy,
    /// Backend per model id; models not listed are replayed.
    pub backends: BTreeMap<String, BackendConfig>,
}

impl InspectionConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let config: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.merge.validate()?;
        self.severity.validate()?;
        let models = self.model_ids();
        if let Some(extra) = self.backends.keys().find(|m| !models.contains(&m.as_str())) {
            return Err(InspectError::usage(format!(
                "backend configured for unused model {extra}"
            )));
        }
        Ok(())
    }

    pub fn model_ids(&self) -> [&str; 3] {
        let p = &self.pipeline;
        [&p.surface_models.0, &p.surface_models.1, &p.thread_model]
    }
}

/// Content hash of everything that influences detections, sizes and grades.
pub fn config_digest(config: &InspectionConfig) -> String {
    #[derive(Serialize)]
    struct Digested<'a> {
        pipeline: &'a PipelineConfig,
        merge: &'a MergeConfig,
        severity: &'a SeverityPolicy,
    }
    let bytes = serde_json::to_vec(&Digested {
        pipeline: &config.pipeline,
        merge: &config.merge,
        severity: &config.severity,
    })
    .expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Instantiate the backend of every model the pipeline uses.
pub fn build_registry(config: &InspectionConfig, fixture: Option<Arc<ReplayFixture>>) -> Result<DetectorRegistry> {
    let mut registry = DetectorRegistry::new();
    let mut seen = Vec::new();
    for model in config.model_ids() {
        if seen.contains(&model) {
            continue;
        }
        seen.push(model);
        let backend = config.backends.get(model).unwrap_or(&BackendConfig::Replay);
        match backend {
            BackendConfig::Replay => {
                let fixture = fixture.clone().ok_or_else(|| {
                    InspectError::usage(format!("model {model} is replayed but no fixture was given"))
                })?;
                registry.register(Arc::new(ReplayDetector::new(model, fixture)))?;
            }
            BackendConfig::Process {
                program,
                args,
                timeout_ms,
            } => {
                let d = ExternalDetector::spawn(model, program, args, Duration::from_millis(*timeout_ms))?;
                registry.register(Arc::new(d))?;
            }
            BackendConfig::Tcp { addr, timeout_ms } => {
                let d = ExternalDetector::connect(model, addr.as_str(), Duration::from_millis(*timeout_ms))?;
                registry.register(Arc::new(d))?;
            }
        }
    }
    Ok(registry)
}

#[derive(Debug, Clone, Default)]
pub struct InspectOptions {
    /// Worker threads for capture processing; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Report timestamp; defaults to now.
    pub created_at: Option<DateTime<Utc>>,
}

/// A configured pipeline ready to inspect parts.
#[derive(Debug)]
pub struct Inspector {
    config: InspectionConfig,
    pipeline: Pipeline,
    digest: String,
}

impl Inspector {
    pub fn new(config: InspectionConfig, registry: DetectorRegistry) -> Result<Self> {
        config.validate()?;
        let pipeline = Pipeline::new(config.pipeline.clone(), registry)?;
        let digest = config_digest(&config);
        Ok(Self {
            config,
            pipeline,
            digest,
        })
    }

    pub fn config(&self) -> &InspectionConfig {
        &self.config
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    /// Run every capture of the part and assemble its report.
    ///
    /// Captures run concurrently; a capture whose backend fails is listed in
    /// `failures` and the part is marked incomplete. The report does not
    /// depend on the degree of parallelism.
    pub fn inspect_part(&self, part: &PartDescription, opts: &InspectOptions) -> Result<InspectionReport> {
        let plan = part.plan()?;
        let run = || -> Vec<(usize, Result<Vec<Detection>>)> {
            plan.captures
                .par_iter()
                .enumerate()
                .map(|(i, c)| (i, self.detect_capture(&image_id(&part.part_id, c), c)))
                .collect()
        };
        let results = match opts.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| InspectError::usage(format!("thread pool: {e}")))?
                .install(run),
            None => run(),
        };

        let mut defects = Vec::new();
        let mut failures = Vec::new();
        for (i, result) in results {
            let capture = &plan.captures[i];
            let id = image_id(&part.part_id, capture);
            match result {
                Ok(dets) => {
                    let cal = part.calibration(capture.kind)?;
                    for d in dets {
                        defects.push(self.measure(capture, &id, &d, cal)?);
                    }
                }
                Err(e) => failures.push(CaptureFailure {
                    image_id: id,
                    error: e.to_string(),
                }),
            }
        }

        defects.sort_by(|a, b| {
            a.view
                .cmp(&b.view)
                .then_with(|| a.image_id.cmp(&b.image_id))
                .then_with(|| a.bbox.x().total_cmp(&b.bbox.x()))
                .then_with(|| a.bbox.y().total_cmp(&b.bbox.y()))
                .then_with(|| a.bbox.w().total_cmp(&b.bbox.w()))
                .then_with(|| a.bbox.h().total_cmp(&b.bbox.h()))
                .then_with(|| b.confidence.total_cmp(&a.confidence))
        });
        for (seq, d) in defects.iter_mut().enumerate() {
            d.defect_id = format!("{}-D{:03}", part.part_id, seq + 1);
        }
        failures.sort_by(|a, b| a.image_id.cmp(&b.image_id));

        let mut report = InspectionReport {
            part_id: part.part_id.clone(),
            part_type: part.part_type.clone(),
            calibrations: part.calibrations.clone(),
            defects,
            part_status: PartStatus::Accepted,
            created_at: opts.created_at.unwrap_or_else(Utc::now),
            config_digest: self.digest.clone(),
            failures,
            verdicts: Vec::new(),
        };
        report.recompute();
        Ok(report)
    }

    fn detect_capture(&self, image_id: &str, capture: &Capture) -> Result<Vec<Detection>> {
        let dets = match capture.kind {
            InspectionKind::Surface => self.pipeline.run_surface(image_id)?,
            InspectionKind::Thread => self.pipeline.run_thread(image_id)?,
        };
        Ok(merge_close(&dets, self.config.merge.distance_for(capture.kind)))
    }

    /// Quantize the box to report precision, then size and grade it. The
    /// grade is taken from the reported (rounded) size so the report stays
    /// self-consistent.
    fn measure(
        &self,
        capture: &Capture,
        image_id: &str,
        d: &Detection,
        cal: &CalibrationRecord,
    ) -> Result<MeasuredDefect> {
        let min = 10f64.powi(-report::REPORT_DECIMALS);
        let b = &d.bbox;
        let bbox = BoundingBox::new(
            quantize(b.x()),
            quantize(b.y()),
            quantize(b.w()).max(min),
            quantize(b.h()).max(min),
        )?;
        let size_px = defect_size_px(&bbox);
        let size_mm = quantize(px_to_mm(size_px, cal));
        Ok(MeasuredDefect {
            defect_id: String::new(),
            view: capture.view,
            kind: capture.kind,
            image_id: image_id.to_string(),
            thread_id: capture.thread_id.clone(),
            bbox,
            confidence: quantize(d.confidence()),
            size_px: quantize(size_px),
            size_mm,
            severity: classify_severity(size_mm, &self.config.severity),
            verdict: None,
        })
    }
}
