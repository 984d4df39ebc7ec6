//! JSON API over [`Service`]. Blocking work runs on the blocking pool so a
//! slow embedding call does not stall the runtime.

use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use claim_match::cluster::ClusterId;
use serde::{Deserialize, Serialize};

use crate::engine::{EngineError, ReviewState, ReviewVerdict, Service, Submission};

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { error: error.to_string(), detail: detail.into() } }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let detail = e.to_string();
        let (status, code) = match &e {
            EngineError::EmptyText | EngineError::ZeroEmbedding => (StatusCode::UNPROCESSABLE_ENTITY, "empty_text"),
            EngineError::ProviderUnavailable { .. } => (StatusCode::SERVICE_UNAVAILABLE, "provider_unavailable"),
            EngineError::UnknownReview(_) => (StatusCode::NOT_FOUND, "unknown_review"),
            EngineError::UnknownMessage(_) => (StatusCode::NOT_FOUND, "unknown_message"),
            EngineError::UnknownCluster(_) => (StatusCode::NOT_FOUND, "unknown_cluster"),
            EngineError::AlreadyResolved { .. } => (StatusCode::CONFLICT, "already_resolved"),
            EngineError::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            EngineError::Corrupt(_) | EngineError::Match(_) | EngineError::Io(_) => {
                tracing::error!(error = %detail, "internal error");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError::new(status, code, detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
struct AppState {
    service: Arc<Service>,
    token: Option<Arc<str>>,
}

/// Routes under `/v1`. With a token, every route but health requires
/// `Authorization: Bearer <token>`.
pub fn router(service: Arc<Service>, token: Option<String>) -> Router {
    let state = AppState { service, token: token.map(Into::into) };
    let protected = Router::new()
        .route("/v1/messages", post(submit))
        .route("/v1/reviews", get(list_reviews))
        .route("/v1/reviews/{id}", post(resolve_review))
        .route("/v1/matches", post(manual_match))
        .route("/v1/clusters", get(list_clusters))
        .route("/v1/clusters/{id}", get(cluster_detail))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().route("/v1/health", get(health)).merge(protected).with_state(state)
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, EngineError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
struct SubmitQuery {
    #[serde(default)]
    preview: bool,
}

async fn submit(
    State(state): State<AppState>,
    Query(q): Query<SubmitQuery>,
    Json(sub): Json<Submission>,
) -> Result<Response, ApiError> {
    let service = state.service.clone();
    let outcome = blocking(move || if q.preview { service.preview(sub) } else { service.submit(sub) }).await?;
    let status = if outcome.message_id.is_some() { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(outcome)).into_response())
}

#[derive(Debug, Deserialize)]
struct ReviewQuery {
    state: Option<String>,
}

async fn list_reviews(State(state): State<AppState>, Query(q): Query<ReviewQuery>) -> ApiResult<Vec<crate::engine::ReviewView>> {
    let filter = match q.state.as_deref() {
        None | Some("all") => None,
        Some(s) => Some(s.parse::<ReviewState>().map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e))?),
    };
    let service = state.service.clone();
    Ok(Json(blocking(move || Ok(service.reviews(filter))).await?))
}

#[derive(Debug, Deserialize)]
struct ResolveBody {
    verdict: ReviewVerdict,
    #[serde(default)]
    reviewer: Option<String>,
}

async fn resolve_review(
    State(state): State<AppState>,
    Path(id): Path<u64>,
    Json(body): Json<ResolveBody>,
) -> ApiResult<crate::engine::ReviewItem> {
    let service = state.service.clone();
    Ok(Json(blocking(move || service.resolve_review(id, body.verdict, body.reviewer.as_deref())).await?))
}

#[derive(Debug, Deserialize)]
struct MatchBody {
    id_a: String,
    id_b: String,
    #[serde(default)]
    reviewer: Option<String>,
}

#[derive(Debug, Serialize)]
struct MatchResponse {
    cluster: ClusterId,
}

async fn manual_match(State(state): State<AppState>, Json(body): Json<MatchBody>) -> ApiResult<MatchResponse> {
    let service = state.service.clone();
    let cluster = blocking(move || service.manual_match(&body.id_a, &body.id_b, body.reviewer.as_deref())).await?;
    Ok(Json(MatchResponse { cluster }))
}

#[derive(Debug, Deserialize)]
struct ClusterQuery {
    min_size: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ClusterRow {
    id: ClusterId,
    size: usize,
    members: Vec<String>,
}

async fn list_clusters(State(state): State<AppState>, Query(q): Query<ClusterQuery>) -> ApiResult<Vec<ClusterRow>> {
    let service = state.service.clone();
    let rows = blocking(move || Ok(service.clusters(q.min_size.unwrap_or(1)))).await?;
    Ok(Json(rows.into_iter().map(|c| ClusterRow { id: c.id, size: c.size(), members: c.members }).collect()))
}

async fn cluster_detail(State(state): State<AppState>, Path(id): Path<ClusterId>) -> ApiResult<crate::engine::ClusterDetail> {
    let service = state.service.clone();
    Ok(Json(blocking(move || service.cluster(id)).await?))
}

async fn health(State(state): State<AppState>) -> ApiResult<crate::engine::Health> {
    let service = state.service.clone();
    Ok(Json(blocking(move || Ok(service.health())).await?))
}

/// Serves until ctrl-c, retrying queued messages every `retry` interval.
pub async fn serve(
    service: Arc<Service>,
    token: Option<String>,
    addr: std::net::SocketAddr,
    retry: std::time::Duration,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, provider = service.provider_name(), "listening");
    let retrier = service.clone();
    let task = tokio::spawn(async move {
        let mut tick = tokio::time::interval(retry);
        loop {
            tick.tick().await;
            let s = retrier.clone();
            match tokio::task::spawn_blocking(move || s.drain_queue()).await {
                Ok(Ok(n)) if n > 0 => tracing::info!(filed = n, "queued messages filed"),
                Ok(Err(e)) => tracing::warn!(error = %e, "queue retry failed"),
                _ => {}
            }
        }
    });
    let result = axum::serve(listener, router(service, token))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    task.abort();
    result
}
