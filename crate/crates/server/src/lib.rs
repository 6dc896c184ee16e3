//! HTTP API over a pattern index.
//!
//! | route | response |
//! |---|---|
//! | `GET /healthz` | `{"status", "records"}` |
//! | `GET /patterns` | id, size, summary and metadata of every record |
//! | `GET /patterns/{id}` | the record's relation graph |
//! | `GET /patterns/{id}/heatmap` | PGM, or PNG when `Accept` asks for `image/png` |
//! | `POST /query` | ranked results with graph summaries |
//! | `GET /params/default` | default similarity parameters |
//!
//! The index is loaded once at startup and only read afterwards, so handlers
//! share it without locking.

mod query;

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use jamgraph::relgraph::Violation;
use jamgraph::retrieval::RecordMetadata;
use jamgraph::speedmap::{heatmap_pixels, pgm_bytes};
use jamgraph::{ExtractConfig, PatternStore, SimilarityParams, SpeedField};
use serde::Serialize;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use query::{QueryRequest, QueryResponse, QueryVariant, ResultEntry};

/// Which browser origins may call the API.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum CorsPolicy {
    Disabled,
    #[default]
    Any,
    Origins(Vec<String>),
}

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    pub cors: CorsPolicy,
    /// Used when a query supplies a raster.
    pub extract: ExtractConfig,
}

struct AppState {
    store: Result<PatternStore, String>,
    extract: ExtractConfig,
}

type Shared = Arc<AppState>;

/// Error body: `{"error": ..., "violations": [{"item", "message"}]}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub violations: Vec<Violation>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            violations: Vec::new(),
        }
    }

    fn invalid(violations: Vec<Violation>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: "invalid request".into(),
            violations,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no pattern `{id}`"))
    }

    fn unavailable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, message)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    violations: &'a [Violation],
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.message,
            violations: &self.violations,
        };
        (self.status, Json(body)).into_response()
    }
}

fn store(state: &AppState) -> Result<&PatternStore, ApiError> {
    state
        .store
        .as_ref()
        .map_err(|e| ApiError::unavailable(format!("index unreadable: {e}")))
}

/// Router over an already opened index.
pub fn router(store: PatternStore, cfg: ServerConfig) -> Router {
    build(Ok(store), cfg)
}

/// Router over the index at `dir`. An index that fails to open is reported
/// by every data route as 503 instead of preventing startup.
pub fn router_for_dir(dir: impl AsRef<Path>, cfg: ServerConfig) -> Router {
    build(PatternStore::open(dir).map_err(|e| e.to_string()), cfg)
}

fn build(store: Result<PatternStore, String>, cfg: ServerConfig) -> Router {
    let state = Arc::new(AppState {
        store,
        extract: cfg.extract,
    });
    let app = Router::new()
        .route("/healthz", get(healthz))
        .route("/patterns", get(list_patterns))
        .route("/patterns/{id}", get(get_pattern))
        .route("/patterns/{id}/heatmap", get(get_heatmap))
        .route("/query", post(query::handle))
        .route("/params/default", get(default_params))
        .with_state(state);
    match cors_layer(&cfg.cors) {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

fn cors_layer(policy: &CorsPolicy) -> Option<CorsLayer> {
    let origin = match policy {
        CorsPolicy::Disabled => return None,
        CorsPolicy::Any => AllowOrigin::any(),
        CorsPolicy::Origins(list) => {
            AllowOrigin::list(list.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect::<Vec<_>>())
        }
    };
    Some(
        CorsLayer::new()
            .allow_origin(origin)
            .allow_methods([Method::GET, Method::POST])
            .allow_headers([header::CONTENT_TYPE, header::ACCEPT]),
    )
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, app).await
}

async fn healthz(State(state): State<Shared>) -> Response {
    match &state.store {
        Ok(s) => Json(serde_json::json!({"status": "ok", "records": s.len()})).into_response(),
        Err(e) => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(serde_json::json!({"status": "unavailable", "error": e})),
        )
            .into_response(),
    }
}

#[derive(Serialize)]
struct PatternSummary<'a> {
    pattern_id: &'a str,
    graph_size: usize,
    summary: String,
    has_raster: bool,
    metadata: &'a RecordMetadata,
}

async fn list_patterns(State(state): State<Shared>) -> Result<Response, ApiError> {
    let store = store(&state)?;
    let list: Vec<PatternSummary> = store
        .records()
        .iter()
        .map(|r| PatternSummary {
            pattern_id: &r.pattern_id,
            graph_size: r.graph_size,
            summary: r.graph.summary(),
            has_raster: r.raster_ref.is_some(),
            metadata: &r.metadata,
        })
        .collect();
    Ok(Json(list).into_response())
}

async fn get_pattern(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let record = store(&state)?.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    Ok(Json(&record.graph).into_response())
}

fn wants_png(headers: &HeaderMap) -> bool {
    headers
        .get_all(header::ACCEPT)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .any(|v| v.split(';').next().unwrap_or("").trim().eq_ignore_ascii_case("image/png"))
}

fn png_bytes(field: &SpeedField) -> Result<Vec<u8>, png::EncodingError> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, field.n_time() as u32, field.n_space() as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&heatmap_pixels(field))?;
    writer.finish()?;
    Ok(out)
}

async fn get_heatmap(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let store = store(&state)?;
    let record = store.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    if record.raster_ref.is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("pattern `{id}` has no stored raster")));
    }
    let field = store
        .load_raster(&id)
        .map_err(|e| ApiError::unavailable(format!("raster of `{id}` unreadable: {e}")))?;
    if wants_png(&headers) {
        let bytes = png_bytes(&field).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
    } else {
        Ok(([(header::CONTENT_TYPE, "image/x-portable-graymap")], pgm_bytes(&field)).into_response())
    }
}

async fn default_params() -> Json<SimilarityParams> {
    Json(SimilarityParams::default())
}
