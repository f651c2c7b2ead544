//! HTTP API over the annotation store, mounted under `/api/v1`.
//!
//! Writes are serialized through one store lock and run on the blocking
//! pool, since each append is synced to disk before the response is sent.
//! Reads take the same lock and therefore see every acknowledged write.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use claimlens_core::annotation::{AnnotationError, AnnotationStore, Task};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<AnnotationStore>>,
}

impl AppState {
    pub fn new(store: AnnotationStore) -> Self {
        Self {
            store: Arc::new(Mutex::new(store)),
        }
    }

    fn lock(&self) -> MutexGuard<'_, AnnotationStore> {
        // A panic mid-request cannot leave the store half-updated: events
        // are applied only after they are durable.
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

pub struct ApiError(AnnotationError);

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self.0 {
            AnnotationError::UnknownParagraph(_) => (StatusCode::NOT_FOUND, "unknown_paragraph"),
            AnnotationError::InvalidLabel(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_label"),
            AnnotationError::EmptyAnnotator => {
                (StatusCode::UNPROCESSABLE_ENTITY, "empty_annotator")
            }
            AnnotationError::NotYetDoubleCoded(_) => (StatusCode::CONFLICT, "not_yet_double_coded"),
            AnnotationError::NoPairableItems => (StatusCode::CONFLICT, "no_pairable_items"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        let body = ErrorBody {
            error: code.to_string(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

fn internal(message: String) -> Response {
    let body = ErrorBody {
        error: "internal".into(),
        message,
    };
    (StatusCode::INTERNAL_SERVER_ERROR, Json(body)).into_response()
}

/// Runs a store mutation on the blocking pool.
async fn write<T, F>(state: AppState, f: F) -> Result<T, Response>
where
    T: Send + 'static,
    F: FnOnce(&mut AnnotationStore) -> Result<T, AnnotationError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&mut state.lock()))
        .await
        .map_err(|e| internal(e.to_string()))?
        .map_err(|e| ApiError(e).into_response())
}

#[derive(Debug, Deserialize)]
pub struct TaskQuery {
    pub annotator: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TaskResponse {
    /// Absent once the annotator has labelled every paragraph.
    pub task: Option<Task>,
    pub done: usize,
    pub total: usize,
    pub taxonomy: serde_json::Value,
}

async fn next_task(State(state): State<AppState>, Query(q): Query<TaskQuery>) -> Response {
    if q.annotator.trim().is_empty() {
        return ApiError(AnnotationError::EmptyAnnotator).into_response();
    }
    let store = state.lock();
    let total = store.sample().len();
    let task = store.next_task(&q.annotator);
    let done = task.as_ref().map_or(total, |t| t.done);
    Json(TaskResponse {
        task,
        done,
        total,
        taxonomy: store.taxonomy().to_document(),
    })
    .into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationBody {
    pub annotator_id: String,
    pub paragraph_id: String,
    pub label: String,
}

async fn submit(State(state): State<AppState>, Json(body): Json<AnnotationBody>) -> Response {
    match write(state, move |s| {
        s.submit_annotation(&body.annotator_id, &body.paragraph_id, &body.label)
    })
    .await
    {
        Ok(record) => (StatusCode::CREATED, Json(record)).into_response(),
        Err(r) => r,
    }
}

async fn disagreements(State(state): State<AppState>) -> Response {
    Json(state.lock().list_disagreements()).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReconcileBody {
    pub paragraph_id: String,
    pub final_label: String,
    pub resolved_by: String,
}

async fn reconcile(State(state): State<AppState>, Json(body): Json<ReconcileBody>) -> Response {
    match write(state, move |s| {
        s.reconcile(&body.paragraph_id, &body.final_label, &body.resolved_by)
    })
    .await
    {
        Ok(label) => (StatusCode::CREATED, Json(label)).into_response(),
        Err(r) => r,
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AutoReconcileBody {
    pub resolved_by: String,
}

async fn auto_reconcile(
    State(state): State<AppState>,
    Json(body): Json<AutoReconcileBody>,
) -> Response {
    match write(state, move |s| s.auto_reconcile(&body.resolved_by)).await {
        Ok(labels) => Json(labels).into_response(),
        Err(r) => r,
    }
}

async fn agreement(State(state): State<AppState>) -> Result<Response, ApiError> {
    Ok(Json(state.lock().agreement_snapshot()?).into_response())
}

async fn taxonomy(State(state): State<AppState>) -> Response {
    Json(state.lock().taxonomy().to_document()).into_response()
}

async fn export_gold(State(state): State<AppState>) -> Response {
    let mut body = String::new();
    for record in state.lock().export_gold() {
        body.push_str(&serde_json::to_string(&record).expect("gold record serializes"));
        body.push('\n');
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

pub fn api_router(state: AppState) -> Router {
    Router::new()
        .route("/tasks", get(next_task))
        .route("/annotations", post(submit))
        .route("/disagreements", get(disagreements))
        .route("/reconciliations", post(reconcile))
        .route("/reconciliations/auto", post(auto_reconcile))
        .route("/agreement", get(agreement))
        .route("/taxonomy", get(taxonomy))
        .route("/export/gold", get(export_gold))
        .with_state(state)
}

/// The API under `/api/v1`, plus static files from `ui_dir` at `/` when
/// given.
pub fn app(store: AnnotationStore, ui_dir: Option<PathBuf>) -> Router {
    let router = Router::new().nest("/api/v1", api_router(AppState::new(store)));
    match ui_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

/// Serves `app` on `listener` until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "annotation service listening");
    axum::serve(listener, app).await
}
