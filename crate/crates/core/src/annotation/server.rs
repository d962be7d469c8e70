//! HTTP API for the ranking study. Responses never carry system names.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use super::{AnnotationError, AnnotationStore, RankingTask, Submission};

type Effective = BTreeMap<(String, String), Submission>;

/// Shared server state. Writes go through the store behind a mutex; reads
/// use the snapshot of effective submissions published after each write.
pub struct AppState {
    tasks: Arc<BTreeMap<String, RankingTask>>,
    seed: u64,
    store: Mutex<AnnotationStore>,
    snapshot: RwLock<Arc<Effective>>,
}

impl AppState {
    pub fn new(store: AnnotationStore, seed: u64) -> Arc<Self> {
        Arc::new(Self {
            tasks: Arc::new(store.tasks().clone()),
            seed,
            snapshot: RwLock::new(Arc::new(store.effective().clone())),
            store: Mutex::new(store),
        })
    }

    fn snapshot(&self) -> Arc<Effective> {
        self.snapshot.read().expect("snapshot lock").clone()
    }
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/tasks", get(list_tasks))
        .route("/api/submissions", post(submit))
        .route("/api/summary", get(summary))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

#[derive(Deserialize)]
struct TasksQuery {
    annotator: Option<String>,
}

async fn list_tasks(State(state): State<Arc<AppState>>, Query(q): Query<TasksQuery>) -> Response {
    let annotator = match q.annotator.as_deref().map(str::trim) {
        Some(a) if !a.is_empty() => a.to_string(),
        _ => return error(StatusCode::BAD_REQUEST, "annotator query parameter is required"),
    };
    let snapshot = state.snapshot();
    let views: Vec<_> = state
        .tasks
        .values()
        .map(|t| {
            let done = snapshot.contains_key(&(t.task_id.clone(), annotator.clone()));
            t.view_for(&annotator, state.seed, done)
        })
        .collect();
    Json(views).into_response()
}

#[derive(Deserialize)]
struct SubmissionBody {
    task_id: String,
    annotator_id: String,
    ranks: BTreeMap<String, u32>,
}

async fn submit(State(state): State<Arc<AppState>>, Json(body): Json<SubmissionBody>) -> Response {
    let sub = Submission {
        task_id: body.task_id,
        annotator_id: body.annotator_id.trim().to_string(),
        ranks: body.ranks,
        submitted_at: chrono::Utc::now(),
    };
    let mut store = state.store.lock().await;
    match store.record_submission(sub) {
        Ok(replaced) => {
            *state.snapshot.write().expect("snapshot lock") = Arc::new(store.effective().clone());
            (
                StatusCode::CREATED,
                Json(json!({ "status": "recorded", "replaced": replaced })),
            )
                .into_response()
        }
        Err(e @ AnnotationError::UnknownTask(_)) => error(StatusCode::NOT_FOUND, e.to_string()),
        Err(e @ (AnnotationError::InvalidRanks(_) | AnnotationError::EmptyAnnotator)) => {
            error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
        }
        Err(e) => {
            tracing::error!("recording submission failed: {e}");
            error(StatusCode::INTERNAL_SERVER_ERROR, "could not record submission")
        }
    }
}

async fn summary(State(state): State<Arc<AppState>>) -> Response {
    let snapshot = state.snapshot();
    match super::mean_ranks(snapshot.values(), &state.tasks) {
        Ok(s) => Json(s).into_response(),
        Err(AnnotationError::NoSubmissions) => error(StatusCode::CONFLICT, "no submissions yet"),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    ui_dir: Option<PathBuf>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(shutdown)
        .await
}
