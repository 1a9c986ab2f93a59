//! Read-only HTTP API over a record snapshot, plus the explorer's static files.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::{ServeDir, ServeFile};

use crate::views::{self, AnovaGrouping, Snapshot, SnapshotSource, ViewError};

const FALLBACK_INDEX: &str = "<!doctype html>\n<title>polyprobe</title>\n<p>No explorer assets are installed. \
The JSON API lives under <code>/api/</code>.</p>\n";

pub struct AppState {
    snapshot: RwLock<Arc<Snapshot>>,
    source: Option<SnapshotSource>,
}

impl AppState {
    /// A fixed snapshot; reload then keeps it as is.
    pub fn fixed(snapshot: Snapshot) -> Self {
        AppState {
            snapshot: RwLock::new(Arc::new(snapshot)),
            source: None,
        }
    }

    pub fn from_source(source: SnapshotSource) -> anyhow::Result<Self> {
        let snapshot = source.load()?;
        Ok(AppState {
            snapshot: RwLock::new(Arc::new(snapshot)),
            source: Some(source),
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    /// Loads a fresh snapshot and swaps it in; the old one stays on failure.
    pub fn reload(&self) -> anyhow::Result<Arc<Snapshot>> {
        let Some(source) = &self.source else {
            return Ok(self.snapshot());
        };
        let fresh = Arc::new(source.load()?);
        *self.snapshot.write().expect("snapshot lock poisoned") = fresh.clone();
        Ok(fresh)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

struct ApiError(StatusCode, String);

impl From<ViewError> for ApiError {
    fn from(e: ViewError) -> Self {
        let status = match e {
            ViewError::NotFound(_) => StatusCode::NOT_FOUND,
            ViewError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ViewError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Shared = Arc<AppState>;

#[derive(Debug, Deserialize)]
struct CurvesQuery {
    language: Option<String>,
    category: Option<String>,
    metric: Option<String>,
}

#[derive(Debug, Deserialize)]
struct HeatmapQuery {
    group_by: Option<String>,
    metric: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SimilarityQuery {
    category: Option<String>,
    max_frechet: Option<f64>,
    min_abs_pearson: Option<f64>,
    metric: Option<String>,
}

#[derive(Debug, Deserialize)]
struct AnovaQuery {
    group_by: Option<String>,
    metric: Option<String>,
    category: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReloadSummary {
    pub records: usize,
    pub malformed: Vec<String>,
    pub warnings: Vec<String>,
}

async fn languages(State(state): State<Shared>) -> Json<Vec<views::LanguageView>> {
    Json(views::languages(&state.snapshot()))
}

async fn tasks(State(state): State<Shared>) -> Json<Vec<views::TaskView>> {
    Json(views::tasks(&state.snapshot()))
}

async fn curves(State(state): State<Shared>, Query(q): Query<CurvesQuery>) -> ApiResult<Vec<polyprobe_core::analytics::ProbingCurve>> {
    let metric = views::parse_metric(q.metric.as_deref())?;
    Ok(Json(views::curves(&state.snapshot(), q.language.as_deref(), q.category.as_deref(), metric)?))
}

async fn heatmap(State(state): State<Shared>, Query(q): Query<HeatmapQuery>) -> ApiResult<Vec<polyprobe_core::analytics::PooledValue>> {
    let metric = views::parse_metric(q.metric.as_deref())?;
    let keys = views::parse_group_keys(q.group_by.as_deref())?;
    Ok(Json(views::heatmap(&state.snapshot(), &keys, metric)))
}

async fn similarity(State(state): State<Shared>, Query(q): Query<SimilarityQuery>) -> ApiResult<polyprobe_core::analytics::GraphExport> {
    let metric = views::parse_metric(q.metric.as_deref())?;
    let snap = state.snapshot();
    let graph = tokio::task::spawn_blocking(move || {
        views::similarity(
            &snap,
            q.category.as_deref(),
            q.max_frechet.unwrap_or(DEFAULT_MAX_FRECHET),
            q.min_abs_pearson.unwrap_or(DEFAULT_MIN_ABS_PEARSON),
            metric,
        )
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(graph))
}

async fn anova(State(state): State<Shared>, Query(q): Query<AnovaQuery>) -> ApiResult<views::AnovaView> {
    let metric = views::parse_metric(q.metric.as_deref())?;
    let group_by = AnovaGrouping::from_str(q.group_by.as_deref().unwrap_or("family")).map_err(ViewError::BadRequest)?;
    Ok(Json(views::anova(&state.snapshot(), group_by, metric, q.category.as_deref())?))
}

async fn reload(State(state): State<Shared>) -> ApiResult<ReloadSummary> {
    let snap = state
        .reload()
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")))?;
    Ok(Json(ReloadSummary {
        records: snap.records.len(),
        malformed: snap.malformed.iter().map(|m| m.to_string()).collect(),
        warnings: snap.warnings.clone(),
    }))
}

async fn api_not_found() -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "no such endpoint".into())
}

async fn fallback_index() -> Html<&'static str> {
    Html(FALLBACK_INDEX)
}

pub const DEFAULT_MAX_FRECHET: f64 = 0.1;
pub const DEFAULT_MIN_ABS_PEARSON: f64 = 0.9;

/// The API under `/api`, static assets from `assets` (if any) under `/`.
pub fn router(state: Shared, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/languages", get(languages))
        .route("/tasks", get(tasks))
        .route("/curves", get(curves))
        .route("/heatmap", get(heatmap))
        .route("/similarity", get(similarity))
        .route("/anova", get(anova))
        .route("/reload", post(reload))
        .fallback(api_not_found)
        .with_state(state);
    let router = Router::new().nest("/api", api);
    match assets {
        Some(dir) => {
            let index = dir.join("index.html");
            router.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => router.fallback(fallback_index),
    }
}

/// Binds and serves until interrupted. SIGHUP reloads the snapshot on Unix.
pub async fn serve(state: Shared, assets: Option<PathBuf>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    #[cfg(unix)]
    {
        let state = state.clone();
        tokio::spawn(async move {
            use tokio::signal::unix::{signal, SignalKind};
            let Ok(mut hup) = signal(SignalKind::hangup()) else {
                return;
            };
            while hup.recv().await.is_some() {
                match state.reload() {
                    Ok(s) => tracing::info!("reloaded {} records", s.records.len()),
                    Err(e) => tracing::warn!("reload failed: {e:#}"),
                }
            }
        });
    }
    axum::serve(listener, router(state, assets))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
