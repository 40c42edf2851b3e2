//! HTTP service over a disagreement store.
//!
//! Reads run concurrently. Writes are serialized behind one lock, and each
//! one is synced to disk before its response is sent.

use std::future::Future;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use wsner::corpus::{load_dataset, Dataset, Format, LabelScheme, Span};
use wsner::pipeline::{DisagreementRecord, DisagreementStore, Progress, RecordStatus};

pub const DEFAULT_BIND: &str = "127.0.0.1:8787";
pub const ENV_STORE: &str = "REVIEW_STORE";
pub const ENV_BIND: &str = "REVIEW_BIND";

const INDEX_HTML: &str = include_str!("../assets/index.html");

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error(transparent)]
    Core(#[from] wsner::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ReviewConfig {
    pub store: PathBuf,
    /// Dataset the records were selected from; checked at startup.
    pub dataset: Option<PathBuf>,
    pub bind: String,
    pub labels: LabelScheme,
    /// Directory of review UI assets. A built-in page is served when absent.
    pub ui_dir: Option<PathBuf>,
}

impl ReviewConfig {
    pub fn new(store: impl Into<PathBuf>) -> Self {
        ReviewConfig {
            store: store.into(),
            dataset: None,
            bind: DEFAULT_BIND.to_owned(),
            labels: LabelScheme::default(),
            ui_dir: None,
        }
    }

    /// Store path from `REVIEW_STORE`, bind address from `REVIEW_BIND`.
    pub fn from_env() -> Result<Self, ReviewError> {
        let store = std::env::var_os(ENV_STORE).ok_or(ReviewError::MissingEnv(ENV_STORE))?;
        let mut config = ReviewConfig::new(store);
        if let Ok(bind) = std::env::var(ENV_BIND) {
            config.bind = bind;
        }
        Ok(config)
    }
}

/// Shared review session.
#[derive(Debug)]
pub struct Review {
    store: RwLock<DisagreementStore>,
    labels: LabelScheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub records: Vec<DisagreementRecord>,
    /// Records with the requested status before `limit` is applied.
    pub total: usize,
}

impl Review {
    /// Opens the store and, if configured, checks every record against the dataset.
    pub fn open(config: &ReviewConfig) -> Result<Self, ReviewError> {
        let store = DisagreementStore::open(&config.store)?;
        if let Some(path) = &config.dataset {
            let dataset = load_dataset(path, Format::from_path(path))?;
            for r in store.records() {
                let sentence = dataset
                    .get(&r.sentence_id)
                    .ok_or_else(|| wsner::Error::UnknownSentence(r.sentence_id.clone()))?;
                if sentence.text() != r.text {
                    return Err(wsner::Error::Data(format!(
                        "record {} text differs from the dataset",
                        r.sentence_id
                    ))
                    .into());
                }
            }
        }
        Ok(Review::new(store, config.labels.clone()))
    }

    pub fn new(store: DisagreementStore, labels: LabelScheme) -> Self {
        Review {
            store: RwLock::new(store),
            labels,
        }
    }

    fn read(&self) -> RwLockReadGuard<'_, DisagreementStore> {
        self.store.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, DisagreementStore> {
        self.store.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Records with `status`, most differences first, then by id.
    pub fn queue(&self, status: RecordStatus, limit: Option<usize>) -> QueuePage {
        let store = self.read();
        let mut records: Vec<DisagreementRecord> = store.with_status(status).cloned().collect();
        records.sort_by(|a, b| {
            b.diff_positions
                .len()
                .cmp(&a.diff_positions.len())
                .then_with(|| a.sentence_id.cmp(&b.sentence_id))
        });
        let total = records.len();
        records.truncate(limit.unwrap_or(usize::MAX));
        QueuePage { records, total }
    }

    pub fn record(&self, sentence_id: &str) -> Option<DisagreementRecord> {
        self.read().get(sentence_id).cloned()
    }

    pub fn progress(&self) -> Progress {
        self.read().progress()
    }

    /// Validates labels against the scheme, then appends the correction.
    pub fn correct(
        &self,
        sentence_id: &str,
        spans: Vec<Span>,
        annotator_id: Option<&str>,
    ) -> wsner::Result<DisagreementRecord> {
        if let Some(s) = spans
            .iter()
            .find(|s| self.labels.label_index(&s.label).is_none())
        {
            return Err(wsner::Error::UnknownLabel(s.label.clone()));
        }
        self.write().correct(sentence_id, spans, annotator_id)
    }

    pub fn skip(
        &self,
        sentence_id: &str,
        annotator_id: Option<&str>,
    ) -> wsner::Result<DisagreementRecord> {
        self.write().skip(sentence_id, annotator_id)
    }

    pub fn export_corrected(&self) -> wsner::Result<Dataset> {
        self.read().export_corrected()
    }
}

/// Resolved records of the store at `path` as a `corrected` layer.
pub fn export_corrected(path: &Path) -> wsner::Result<Dataset> {
    DisagreementStore::open(path)?.export_corrected()
}

/// JSON error body: `{"error": kind, "message": text}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}

struct Failure(wsner::Error);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        use wsner::Error as E;
        let (status, kind) = match &self.0 {
            E::UnknownSentence(_) => (StatusCode::NOT_FOUND, "UnknownSentenceError"),
            E::Overlap { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "OverlapError"),
            E::Range { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "RangeError"),
            E::UnknownLabel(_) => (StatusCode::UNPROCESSABLE_ENTITY, "UnknownLabelError"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "InternalError"),
        };
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        let body = ApiError {
            error: kind.to_owned(),
            message: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    status: Option<RecordStatus>,
    limit: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionBody {
    pub spans: Vec<Span>,
    #[serde(default)]
    pub annotator_id: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SkipBody {
    #[serde(default)]
    pub annotator_id: Option<String>,
}

type Shared = State<Arc<Review>>;

async fn queue(State(review): Shared, Query(q): Query<QueueQuery>) -> Json<QueuePage> {
    Json(review.queue(q.status.unwrap_or(RecordStatus::Pending), q.limit))
}

async fn record(
    State(review): Shared,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<DisagreementRecord>, Failure> {
    review
        .record(&id)
        .map(Json)
        .ok_or(Failure(wsner::Error::UnknownSentence(id)))
}

async fn progress(State(review): Shared) -> Json<Progress> {
    Json(review.progress())
}

/// Runs a store write off the async workers; the write includes an fsync.
async fn blocking<F>(review: Arc<Review>, f: F) -> Result<Json<DisagreementRecord>, Failure>
where
    F: FnOnce(&Review) -> wsner::Result<DisagreementRecord> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&review))
        .await
        .map_err(|e| Failure(wsner::Error::Invariant(format!("write task failed: {e}"))))?
        .map(Json)
        .map_err(Failure)
}

async fn correct(
    State(review): Shared,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<CorrectionBody>,
) -> Result<Json<DisagreementRecord>, Failure> {
    blocking(review, move |r| {
        r.correct(&id, body.spans, body.annotator_id.as_deref())
    })
    .await
}

async fn skip(
    State(review): Shared,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<SkipBody>,
) -> Result<Json<DisagreementRecord>, Failure> {
    blocking(review, move |r| r.skip(&id, body.annotator_id.as_deref())).await
}

async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

/// API routes plus the UI: files from `ui_dir`, or the built-in page.
pub fn router(review: Arc<Review>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/queue", get(queue))
        .route("/api/record/{id}", get(record))
        .route("/api/record/{id}/correction", post(correct))
        .route("/api/record/{id}/skip", post(skip))
        .route("/api/progress", get(progress))
        .with_state(review);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index)),
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    config: ReviewConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ReviewError> {
    let review = Arc::new(Review::open(&config)?);
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|source| ReviewError::Bind {
            addr: config.bind.clone(),
            source,
        })?;
    log::info!(
        "review server listening on http://{}",
        listener.local_addr()?
    );
    let app = router(review, config.ui_dir.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Blocking wrapper around [`serve`] that stops on Ctrl-C.
pub fn serve_blocking(config: ReviewConfig) -> Result<(), ReviewError> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve(config, async {
        let _ = tokio::signal::ctrl_c().await;
    }))
}
