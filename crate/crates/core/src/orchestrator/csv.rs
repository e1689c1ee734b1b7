//! Per-part CSV defect report.
//!
//! One row per defect followed by a part-summary row whose defect columns
//! are empty. Reals carry exactly four decimals, so a report parsed back from
//! its CSV equals the original bit for bit (report values are already stored
//! at that precision).

use csv::{ReaderBuilder, Terminator, WriterBuilder};

use super::parse_image_id;
use super::report::{InspectionReport, MeasuredDefect, PartStatus};
use crate::error::{InspectError, Result};
use crate::geometry::BoundingBox;

pub const CSV_HEADER: [&str; 15] = [
    "part_id",
    "part_type",
    "view",
    "image_id",
    "defect_id",
    "bbox_x_px",
    "bbox_y_px",
    "bbox_w_px",
    "bbox_h_px",
    "confidence",
    "size_px",
    "size_mm",
    "severity",
    "verdict",
    "part_status",
];

fn real(v: f64) -> String {
    format!("{v:.4}")
}

pub fn render_csv(report: &InspectionReport) -> Result<String> {
    let mut w = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let status = report.part_status.as_str();
    for d in &report.defects {
        w.write_record([
            report.part_id.as_str(),
            &report.part_type,
            d.view.as_str(),
            &d.image_id,
            &d.defect_id,
            &real(d.bbox.x()),
            &real(d.bbox.y()),
            &real(d.bbox.w()),
            &real(d.bbox.h()),
            &real(d.confidence),
            &real(d.size_px),
            &real(d.size_mm),
            d.severity.as_str(),
            d.verdict.map(|v| v.as_str()).unwrap_or(""),
            status,
        ])?;
    }
    let mut summary = vec![""; CSV_HEADER.len()];
    summary[0] = &report.part_id;
    summary[1] = &report.part_type;
    summary[14] = status;
    w.write_record(&summary)?;
    let bytes = w.into_inner().map_err(|e| InspectError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| InspectError::usage(e.to_string()))
}

/// Contents of a parsed per-part CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub part_id: String,
    pub part_type: String,
    pub part_status: PartStatus,
    pub defects: Vec<MeasuredDefect>,
}

pub fn parse_csv(text: &str) -> Result<ParsedCsv> {
    let mut reader = ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(InspectError::usage("unexpected CSV header"));
    }
    let mut defects = Vec::new();
    let mut summary: Option<(String, String, PartStatus)> = None;
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let field = |i: usize| &row[i];
        let num = |i: usize| -> Result<f64> {
            field(i).parse().map_err(|_| {
                InspectError::usage(format!(
                    "row {}: bad number {:?} in {}",
                    line + 2,
                    field(i),
                    CSV_HEADER[i]
                ))
            })
        };
        let status: PartStatus = field(14).parse()?;
        if field(4).is_empty() {
            summary = Some((field(0).to_string(), field(1).to_string(), status));
            continue;
        }
        let (view, kind, thread_id) = parse_image_id(field(0), field(3))?;
        if view.as_str() != field(2) {
            return Err(InspectError::usage(format!(
                "row {}: view does not match image id",
                line + 2
            )));
        }
        defects.push(MeasuredDefect {
            defect_id: field(4).to_string(),
            view,
            kind,
            image_id: field(3).to_string(),
            thread_id,
            bbox: BoundingBox::new(num(5)?, num(6)?, num(7)?, num(8)?)?,
            confidence: num(9)?,
            size_px: num(10)?,
            size_mm: num(11)?,
            severity: field(12).parse()?,
            verdict: match field(13) {
                "" => None,
                v => Some(v.parse()?),
            },
        });
    }
    let (part_id, part_type, part_status) =
        summary.ok_or_else(|| InspectError::usage("CSV has no part-summary row"))?;
    Ok(ParsedCsv {
        part_id,
        part_type,
        part_status,
        defects,
    })
}
