//! Review service: lists parts, serves borderline defects with crop
//! references, and records supervisor verdicts.

use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use inspect_core::measurement::Severity;
use inspect_core::orchestrator::{MeasuredDefect, PartStatus, PartSummary, ReviewStore, Verdict};
use inspect_core::InspectError;
use serde::{Deserialize, Serialize};

/// Context around a defect included in its crop, in pixels.
pub const CROP_MARGIN_PX: u32 = 32;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<ReviewStore>,
    /// Directory of `{image_id}.png` files; crops are unavailable without it.
    pub images: Option<PathBuf>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/parts", get(list_parts))
        .route("/parts/{part_id}/defects", get(list_defects))
        .route("/images/{image_id}/crop", get(crop_image))
        .route("/defects/{defect_id}/verdict", post(submit_verdict))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<InspectError> for ApiError {
    fn from(e: InspectError) -> Self {
        let status = match e {
            InspectError::Lookup(_) => StatusCode::NOT_FOUND,
            InspectError::Usage(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn list_parts(State(state): State<AppState>) -> Json<Vec<PartSummary>> {
    Json(state.store.parts())
}

#[derive(Debug, Deserialize)]
struct DefectFilter {
    severity: Option<String>,
}

/// Region of the source image to show for a defect, and where the defect sits
/// inside it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CropRef {
    pub url: String,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    /// Defect box relative to the crop origin.
    pub bbox_in_crop: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DefectView {
    pub part_id: String,
    #[serde(flatten)]
    pub defect: MeasuredDefect,
    pub crop: CropRef,
}

pub fn crop_ref(d: &MeasuredDefect) -> CropRef {
    let x = (d.bbox.x().floor() as u32).saturating_sub(CROP_MARGIN_PX);
    let y = (d.bbox.y().floor() as u32).saturating_sub(CROP_MARGIN_PX);
    let w = (d.bbox.right().ceil() as u32 + CROP_MARGIN_PX) - x;
    let h = (d.bbox.bottom().ceil() as u32 + CROP_MARGIN_PX) - y;
    CropRef {
        url: format!("/images/{}/crop?x={x}&y={y}&w={w}&h={h}", d.image_id),
        x,
        y,
        w,
        h,
        bbox_in_crop: [d.bbox.x() - x as f64, d.bbox.y() - y as f64, d.bbox.w(), d.bbox.h()],
    }
}

async fn list_defects(
    State(state): State<AppState>,
    UrlPath(part_id): UrlPath<String>,
    Query(filter): Query<DefectFilter>,
) -> ApiResult<Json<Vec<DefectView>>> {
    let severity = match filter.severity.as_deref() {
        None | Some("") => None,
        Some(s) => Some(
            s.parse::<Severity>()
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?,
        ),
    };
    let defects = state.store.defects(&part_id, severity)?;
    Ok(Json(
        defects
            .into_iter()
            .map(|defect| DefectView {
                part_id: part_id.clone(),
                crop: crop_ref(&defect),
                defect,
            })
            .collect(),
    ))
}

#[derive(Debug, Deserialize)]
struct CropQuery {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

fn valid_image_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_'))
}

fn render_crop(path: &Path, q: &CropQuery) -> ApiResult<Vec<u8>> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            ApiError::new(StatusCode::NOT_FOUND, format!("no image at {}", path.display()))
        }
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
    })?;
    if q.w == 0 || q.h == 0 || q.x >= img.width() || q.y >= img.height() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("region outside the {}x{} image", img.width(), img.height()),
        ));
    }
    // clamp to the image; the caller's margin may run past the edge
    let w = q.w.min(img.width() - q.x);
    let h = q.h.min(img.height() - q.y);
    let mut out = Cursor::new(Vec::new());
    img.crop_imm(q.x, q.y, w, h)
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(out.into_inner())
}

async fn crop_image(
    State(state): State<AppState>,
    UrlPath(image_id): UrlPath<String>,
    Query(q): Query<CropQuery>,
) -> ApiResult<Response> {
    if !valid_image_id(&image_id) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("bad image id {image_id:?}"),
        ));
    }
    let dir = state
        .images
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "service started without an image directory"))?;
    let path = dir.join(format!("{image_id}.png"));
    let png = tokio::task::spawn_blocking(move || render_crop(&path, &q))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictBody {
    verdict: Verdict,
    reviewer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerdictResponse {
    pub part_id: String,
    pub part_status: PartStatus,
    pub defect: MeasuredDefect,
}

async fn submit_verdict(
    State(state): State<AppState>,
    UrlPath(defect_id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<VerdictResponse>> {
    let body: VerdictBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let store = state.store.clone();
    let id = defect_id.clone();
    let report = tokio::task::spawn_blocking(move || store.submit(&id, body.verdict, &body.reviewer, Utc::now()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let defect = report
        .defect(&defect_id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "defect vanished after verdict"))?;
    Ok(Json(VerdictResponse {
        part_id: report.part_id,
        part_status: report.part_status,
        defect,
    }))
}
