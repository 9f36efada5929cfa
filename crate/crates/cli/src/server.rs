//! Review API over an `evaluate` output directory.
//!
//! The directory holds `review_state.json` (the held-out cells), `report.json`
//! (the batch report) and `events.ndjson` (the correction log). On startup the
//! log is replayed over the snapshot. Each correction is appended and synced
//! to the log before it is applied and acknowledged; a single write lock keeps
//! log order and apply order identical.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::RwLock;

use tabuq_core::evaluation::CellKey;
use tabuq_core::pipeline::io::read_json;
use tabuq_core::pipeline::{EvaluationArtifact, REPORT_FILE, REVIEW_STATE_FILE};
use tabuq_core::review::{
    CellView, CorrectionEvent, CorrectionRequest, EventLog, ReviewError, ReviewSession, ReviewSnapshot,
};

pub const EVENTS_FILE: &str = "events.ndjson";
pub const API_PREFIX: &str = "/api/v1";

pub struct AppState {
    session: RwLock<ReviewSession>,
    log: EventLog,
    report: EvaluationArtifact,
}

impl AppState {
    /// Loads the snapshot and report and replays the event log.
    pub fn open(state_dir: &Path) -> tabuq_core::Result<Self> {
        let snapshot: ReviewSnapshot = read_json(&state_dir.join(REVIEW_STATE_FILE))?;
        let report: EvaluationArtifact = read_json(&state_dir.join(REPORT_FILE))?;
        let log = EventLog::new(state_dir.join(EVENTS_FILE));
        let session = ReviewSession::replay(snapshot, log.load()?)?;
        Ok(AppState {
            session: RwLock::new(session),
            log,
            report,
        })
    }

    pub async fn session(&self) -> tokio::sync::RwLockReadGuard<'_, ReviewSession> {
        self.session.read().await
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match e {
            ReviewError::UnknownTable(_) | ReviewError::UnknownCell { .. } => StatusCode::NOT_FOUND,
            ReviewError::NotFlagged { .. } | ReviewError::AlreadyReviewed { .. } | ReviewError::OutOfOrder { .. } => {
                StatusCode::CONFLICT
            }
            ReviewError::MissingText => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, e.to_string())
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/tables", get(list_tables))
        .route("/tables/{id}/cells", get(table_cells))
        .route("/tables/{id}/image", get(table_image))
        .route("/tables/{id}/cells/{cell}/correction", post(submit_correction))
        .route("/queue", get(queue))
        .route("/report", get(report))
        .route("/report/live", get(live_report))
        .with_state(state);
    Router::new().nest(API_PREFIX, api)
}

async fn list_tables(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.session().await.tables())
}

#[derive(Debug, Default, Deserialize)]
struct CellsQuery {
    #[serde(default)]
    flagged: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TableCells {
    pub table_id: String,
    pub domain: String,
    pub has_image: bool,
    pub cells: Vec<CellView>,
}

async fn table_cells(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<CellsQuery>,
) -> ApiResult<Json<TableCells>> {
    let session = s.session().await;
    let table = session
        .table(&id)
        .ok_or_else(|| ApiError::from(ReviewError::UnknownTable(id.clone())))?;
    Ok(Json(TableCells {
        table_id: table.table_id.clone(),
        domain: table.domain.clone(),
        has_image: table.image_ref.is_some(),
        cells: session.cells(&id, q.flagged).expect("table exists"),
    }))
}

fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn table_image(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let path: PathBuf = {
        let session = s.session().await;
        let table = session
            .table(&id)
            .ok_or_else(|| ApiError::from(ReviewError::UnknownTable(id.clone())))?;
        match &table.image_ref {
            Some(p) => PathBuf::from(p),
            None => return Err(ApiError(StatusCode::NOT_FOUND, format!("table `{id}` has no image"))),
        }
    };
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError(StatusCode::NOT_FOUND, format!("image for `{id}` unavailable: {e}")))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

fn parse_cell(cell: &str) -> ApiResult<(usize, usize)> {
    let bad = || ApiError(StatusCode::BAD_REQUEST, format!("cell must be `row,col`, got `{cell}`"));
    let (r, c) = cell.split_once(',').ok_or_else(bad)?;
    Ok((
        r.trim().parse().map_err(|_| bad())?,
        c.trim().parse().map_err(|_| bad())?,
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CorrectionResponse {
    pub event: CorrectionEvent,
    pub cell: CellView,
}

async fn submit_correction(
    State(s): State<Shared>,
    UrlPath((id, cell)): UrlPath<(String, String)>,
    Json(req): Json<CorrectionRequest>,
) -> ApiResult<Json<CorrectionResponse>> {
    let (row, col) = parse_cell(&cell)?;
    let key = CellKey::new(id.clone(), row, col);
    let mut session = s.session.write().await;
    session.check(&key, &req)?;
    let event = session.event_for(&key, req, chrono::Utc::now().to_rfc3339());
    s.log.append(&event).map_err(internal)?;
    session.apply(event.clone())?;
    let view = session
        .cells(&id, false)
        .and_then(|cells| cells.into_iter().find(|c| c.row == row && c.col == col))
        .ok_or_else(|| internal("applied cell vanished"))?;
    Ok(Json(CorrectionResponse { event, cell: view }))
}

async fn queue(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.session().await.queue())
}

async fn report(State(s): State<Shared>) -> impl IntoResponse {
    Json(s.report.clone())
}

async fn live_report(State(s): State<Shared>) -> ApiResult<Response> {
    let metrics = s.session().await.live_metrics().map_err(internal)?;
    Ok(Json(metrics).into_response())
}

/// Serves until the listener fails or the process receives Ctrl-C.
pub async fn serve(state: AppState, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
