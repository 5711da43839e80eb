//! HTTP front end for interactive extraction.
//!
//! Images are uploaded once; their feature stacks are computed at upload and
//! shared read-only between requests. Extraction requests run on the blocking
//! pool, one independent pipeline run per request.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tubular_core::grid::ScalarImage;
use tubular_core::io::{decode_image, encode_gray_png};
use tubular_core::orientation::{orientation_profile, OrientationProfile};
use tubular_core::pipeline::{run_extraction, ExtractionConfig, FeatureStack, SegmentDiagnostics, StageTiming};
use tubular_core::raster::rasterize_polyline;
use tubular_core::Error;

/// JSON error body `{code, message}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.to_string(), message: message.into() }
    }

    fn not_found(id: u64) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", format!("no image with id {id}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) | Error::Domain(_) | Error::Config(_) | Error::InvalidSeed(_) | Error::Image(_) => {
                StatusCode::BAD_REQUEST
            }
            Error::Unreachable(_) | Error::MaskTooTight(_) | Error::DegenerateFeature(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Numeric(_) | Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct ImageEntry {
    image: ScalarImage,
    // one stack per distinct set of feature parameters
    stacks: Mutex<Vec<Arc<FeatureStack>>>,
}

impl ImageEntry {
    fn stack_for(&self, cfg: &ExtractionConfig) -> tubular_core::Result<Arc<FeatureStack>> {
        if let Some(s) = self.stacks.lock().unwrap().iter().find(|s| s.is_compatible(cfg)) {
            return Ok(s.clone());
        }
        // computed outside the lock; a concurrent duplicate is harmless
        let stack = Arc::new(FeatureStack::compute(self.image.clone(), cfg)?);
        let mut stacks = self.stacks.lock().unwrap();
        if let Some(s) = stacks.iter().find(|s| s.is_compatible(cfg)) {
            return Ok(s.clone());
        }
        stacks.push(stack.clone());
        Ok(stack)
    }
}

/// Shared service state.
pub struct AppState {
    base: ExtractionConfig,
    images: RwLock<HashMap<u64, Arc<ImageEntry>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(base: ExtractionConfig) -> Arc<Self> {
        Arc::new(Self { base, images: RwLock::new(HashMap::new()), next_id: AtomicU64::new(1) })
    }

    fn entry(&self, id: u64) -> ApiResult<Arc<ImageEntry>> {
        self.images.read().unwrap().get(&id).cloned().ok_or_else(|| ApiError::not_found(id))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/images", post(upload))
        .route("/images/{id}/preview", get(preview))
        .route("/images/{id}/orientation", get(orientation))
        .route("/extract", post(extract))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, base: ExtractionConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(base))).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

#[derive(Debug, Default, Deserialize)]
struct UploadQuery {
    /// Bright-on-dark images are inverted before feature extraction.
    #[serde(default)]
    invert: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UploadResponse {
    pub id: u64,
    pub width: usize,
    pub height: usize,
    pub timings: Vec<StageTiming>,
}

async fn upload(
    State(state): State<Arc<AppState>>,
    Query(q): Query<UploadQuery>,
    body: Bytes,
) -> ApiResult<Json<UploadResponse>> {
    if body.is_empty() {
        return Err(Error::InvalidInput("empty upload".into()).into());
    }
    let st = state.clone();
    let (entry, timings) = blocking(move || {
        let mut image = decode_image(&body)?;
        if q.invert {
            image = image.map(|v| 1.0 - v)?;
        }
        let stack = FeatureStack::compute(image.clone(), &st.base)?;
        let timings = stack.timings.clone();
        Ok((ImageEntry { image, stacks: Mutex::new(vec![Arc::new(stack)]) }, timings))
    })
    .await?;
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    let (width, height) = (entry.image.width(), entry.image.height());
    state.images.write().unwrap().insert(id, Arc::new(entry));
    Ok(Json(UploadResponse { id, width, height, timings }))
}

async fn preview(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult<Response> {
    let entry = state.entry(id)?;
    let png = encode_gray_png(entry.image.width(), entry.image.height(), entry.image.values())?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Debug, Deserialize)]
struct PixelQuery {
    x: usize,
    y: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OrientationResponse {
    #[serde(flatten)]
    pub enhanced: OrientationProfile,
    /// Raw score before coherence enhancement, same bins.
    pub raw: Vec<f64>,
}

async fn orientation(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u64>,
    Query(q): Query<PixelQuery>,
) -> ApiResult<Json<OrientationResponse>> {
    let entry = state.entry(id)?;
    let (w, h) = (entry.image.width(), entry.image.height());
    if q.x >= w || q.y >= h {
        return Err(Error::Domain(format!("pixel ({}, {}) outside the {w}x{h} image", q.x, q.y)).into());
    }
    let stack = entry.stack_for(&state.base)?;
    Ok(Json(OrientationResponse {
        enhanced: orientation_profile(&stack.enhanced, &stack.peaks, q.x, q.y),
        raw: stack.raw.profile(q.x, q.y).to_vec(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExtractRequest {
    pub image_id: u64,
    /// Ordered seed, waypoints and end point in cell coordinates.
    pub points: Vec<[usize; 2]>,
    #[serde(default)]
    pub config: Option<Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExtractResponse {
    pub width: usize,
    pub height: usize,
    /// `[[x, y], ...]`
    pub path: Value,
    /// `[[x, y, r], ...]` when the radius-lifted pass ran.
    pub radius_path: Option<Value>,
    /// Cells traversed by the path (4-connected supercover), as `[x, y]`.
    pub cells: Vec<[usize; 2]>,
    pub segments: Vec<SegmentDiagnostics>,
    pub timings: Vec<StageTiming>,
}

async fn extract(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<ExtractResponse>> {
    let req: ExtractRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid-input", format!("bad request body: {e}")))?;
    let entry = state.entry(req.image_id)?;
    let cfg = match &req.config {
        Some(o) => state.base.with_overrides(o)?,
        None => state.base.clone(),
    };
    let (w, h) = (entry.image.width(), entry.image.height());
    let points = req.points;
    let res = blocking(move || {
        let stack = entry.stack_for(&cfg)?;
        Ok(run_extraction(&stack, &points, &cfg)?)
    })
    .await?;
    let cells = rasterize_polyline(&res.path.points, w, h).into_iter().map(|i| [i % w, i / w]).collect();
    Ok(Json(ExtractResponse {
        width: w,
        height: h,
        path: res.path.to_json(),
        radius_path: res.radius_path.as_ref().map(|p| p.to_json()),
        cells,
        segments: res.segments,
        timings: res.timings,
    }))
}

