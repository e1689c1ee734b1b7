//! Subcommand bodies. Each returns the text the CLI prints so tests can
//! check output without spawning the binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use inspect_core::detector::ReplayFixture;
use inspect_core::evaluation::{evaluate_run, EvalResult, GroundTruthSet, PredictionSet};
use inspect_core::optics::{plan_optics, OpticsSpec};
use inspect_core::orchestrator::store::{csv_path, read_report, save_inspection};
use inspect_core::orchestrator::{
    build_registry, InspectOptions, InspectionConfig, InspectionReport, Inspector, PartDescription, PartStatus,
};
use inspect_core::scan::{build_plan, render_plan_table, summarize_plan, ScanTiming, ViewSpec};
use serde::Deserialize;

pub struct InspectArgs {
    pub parts: Vec<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

pub struct InspectOutcome {
    pub reports: Vec<InspectionReport>,
    pub summary: String,
}

impl InspectOutcome {
    pub fn incomplete(&self) -> usize {
        self.reports
            .iter()
            .filter(|r| r.part_status == PartStatus::Incomplete)
            .count()
    }
}

pub fn load_config(path: Option<&Path>) -> Result<InspectionConfig> {
    match path {
        Some(p) => InspectionConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(InspectionConfig::default()),
    }
}

/// Inspect each part and write its CSV, JSON sidecar and index entry.
pub fn inspect(args: &InspectArgs) -> Result<InspectOutcome> {
    let config = load_config(args.config.as_deref())?;
    let fixture = match &args.fixtures {
        Some(p) => Some(Arc::new(
            ReplayFixture::load(p).with_context(|| format!("reading fixtures {}", p.display()))?,
        )),
        None => None,
    };
    let registry = build_registry(&config, fixture)?;
    let inspector = Inspector::new(config, registry)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let opts = InspectOptions {
        threads: args.threads,
        created_at: None,
    };
    let mut reports = Vec::new();
    let mut summary = String::new();
    for path in &args.parts {
        let part = PartDescription::load(path).with_context(|| format!("reading part {}", path.display()))?;
        let report = inspector.inspect_part(&part, &opts)?;
        save_inspection(&args.out, &report)?;
        let counts: Vec<String> = report
            .severity_counts()
            .iter()
            .map(|(sev, n)| format!("{n} {sev}"))
            .collect();
        writeln!(
            summary,
            "{} {}: {} defects ({}) -> {}",
            report.part_id,
            report.part_status,
            report.defects.len(),
            if counts.is_empty() {
                "none".to_string()
            } else {
                counts.join(", ")
            },
            csv_path(&args.out, &report.part_id).display()
        )?;
        for f in &report.failures {
            writeln!(summary, "  capture {} failed: {}", f.image_id, f.error)?;
        }
        reports.push(report);
    }
    Ok(InspectOutcome { reports, summary })
}

/// Scan layout file. Only `views` and `timing` are read, so a full part
/// description works too.
#[derive(Debug, Deserialize)]
struct ScanFile {
    views: Vec<ViewSpec>,
    #[serde(default)]
    timing: ScanTiming,
}

pub fn plan_scan(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ScanFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let plan = build_plan(&file.views, &file.timing)?;
    let mut out = render_plan_table(&summarize_plan(&plan));
    writeln!(
        out,
        "\nThread scan: {} threads x {} s = {} s ({:.2} min)",
        plan.thread_count(),
        file.timing.seconds_per_thread,
        plan.thread_seconds,
        plan.thread_seconds / 60.0
    )?;
    writeln!(out, "Surface scan: {} s", file.timing.surface_total_seconds)?;
    writeln!(
        out,
        "Estimated total: {} s ({:.2} min)",
        plan.estimated_seconds,
        plan.estimated_seconds / 60.0
    )?;
    Ok(out)
}

pub fn optics_table(spec: &OpticsSpec) -> Result<String> {
    let plan = plan_optics(spec)?;
    let mut out = String::new();
    writeln!(out, "Required resolution: {:.0} px", plan.required_resolution_px)?;
    match plan.suggested_sensor_px {
        Some(w) => writeln!(out, "Smallest stock sensor width: {w} px")?,
        None => writeln!(out, "Smallest stock sensor width: none large enough")?,
    }
    writeln!(
        out,
        "Focal length at {:.0} px: {:.3} mm",
        spec.sensor_resolution_px, plan.focal_length_mm
    )?;
    writeln!(out, "Nearest stock lens: {} mm", plan.suggested_focal_length_mm)?;
    Ok(out)
}

/// Predictions from a prediction-set JSON, a `*.report.json` sidecar, or a
/// directory of sidecars.
pub fn load_predictions(path: &Path) -> Result<PredictionSet> {
    let sidecars: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        v.retain(|p| p.to_string_lossy().ends_with(".report.json"));
        v.sort();
        if v.is_empty() {
            bail!("no report sidecars in {}", path.display());
        }
        v
    } else if path.to_string_lossy().ends_with(".report.json") {
        vec![path.to_path_buf()]
    } else {
        return PredictionSet::load(path).with_context(|| format!("reading predictions {}", path.display()));
    };
    let mut set = PredictionSet::default();
    for p in sidecars {
        let report = read_report(&p).with_context(|| format!("reading report {}", p.display()))?;
        set.images.extend(report.predictions().images);
    }
    Ok(set)
}

fn label(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    name.trim_end_matches(".report.json")
        .trim_end_matches(".json")
        .to_string()
}

pub fn evaluate(preds: &[PathBuf], gt: &Path) -> Result<(String, Vec<EvalResult>)> {
    let truth = GroundTruthSet::load(gt).with_context(|| format!("reading ground truth {}", gt.display()))?;
    let mut out = String::from("Model, mAP50, mAP30, FP, FN, MAE (mm)\n");
    let mut results = Vec::new();
    for p in preds {
        let r = evaluate_run(&load_predictions(p)?, &truth)?;
        let mae = r.mae_mm.map_or("-".to_string(), |m| format!("{m:.4}"));
        writeln!(
            out,
            "{}, {:.4}, {:.4}, {}, {}, {}",
            label(p),
            r.ap50,
            r.ap30,
            r.fp,
            r.fn_,
            mae
        )?;
        results.push(r);
    }
    Ok((out, results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_strip_known_suffixes() {
        assert_eq!(label(Path::new("runs/sahi-v3.json")), "sahi-v3");
        assert_eq!(label(Path::new("out/P01.report.json")), "P01");
        assert_eq!(label(Path::new("reports")), "reports");
    }

    #[test]
    fn optics_table_for_surface_lens() {
        let spec = OpticsSpec {
            fov_mm: 120.0,
            min_feature_mm: 0.5,
            min_feature_px: 10.0,
            working_distance_mm: 86.0,
            sensor_resolution_px: 2448.0,
            pixel_size_mm: 0.00345,
        };
        let text = optics_table(&spec).unwrap();
        assert!(text.contains("Required resolution: 2400 px"), "{text}");
        assert!(text.contains("Smallest stock sensor width: 2448 px"));
        assert!(text.contains("6.053 mm"));
        assert!(text.contains("Nearest stock lens: 6 mm"));
    }
}
