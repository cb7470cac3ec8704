//! Loopback HTTP API over the review workflow.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/cycles/{id}/items` | |
//! | GET | `/items/{id}` | |
//! | POST | `/items/{id}/corrections` | `{"note": "..."}` |
//! | POST | `/items/{id}/approve` | `{"final_score": 0.62}` (optional, defaults to the model score) |
//! | GET | `/items/{id}/transcript` | |
//!
//! Every handler runs the blocking review call on the blocking pool.

use std::net::SocketAddr;
use std::sync::Arc;

use alphalab_core::review::{ReviewError, ReviewItem, ReviewService, ReviewStatus};
use alphalab_core::{CycleId, ProviderId, Severity, SignalStrategy, Ticker, ValidationFinding};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

/// Queue entry: the item without its trace snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub item_id: String,
    pub cycle_id: CycleId,
    pub firm: Ticker,
    pub provider: ProviderId,
    pub strategy: SignalStrategy,
    pub status: ReviewStatus,
    pub findings: Vec<ValidationFinding>,
    pub findings_count: usize,
    pub worst_severity: Option<Severity>,
    pub model_score: Option<f64>,
    pub final_score: Option<f64>,
    pub iterations: u32,
}

impl From<&ReviewItem> for ItemSummary {
    fn from(item: &ReviewItem) -> Self {
        Self {
            item_id: item.item_id.clone(),
            cycle_id: item.cycle_id.clone(),
            firm: item.firm.clone(),
            provider: item.provider.clone(),
            strategy: item.strategy,
            status: item.status,
            findings: item.findings.clone(),
            findings_count: item.findings.len(),
            worst_severity: item.worst_severity(),
            model_score: item.model_score(),
            final_score: item.final_score,
            iterations: item.iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemDetail {
    #[serde(flatten)]
    pub item: ReviewItem,
    pub model_score: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectionRequest {
    pub note: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ApprovalRequest {
    #[serde(default)]
    pub final_score: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub code: String,
}

pub struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self(status, ErrorBody { error: message.into(), code: code.to_owned() })
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let (status, code) = match &e {
            ReviewError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ReviewError::ItemLocked(_) => (StatusCode::CONFLICT, "item_locked"),
            ReviewError::ItemBusy(_) => (StatusCode::CONFLICT, "item_busy"),
            ReviewError::InvalidScore(_) => (StatusCode::BAD_REQUEST, "invalid_score"),
            ReviewError::EmptyNote => (StatusCode::BAD_REQUEST, "invalid_note"),
            ReviewError::Parse(_) | ReviewError::Gateway(_) => (StatusCode::BAD_GATEWAY, "provider_failure"),
            ReviewError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store_failure"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(service: Arc<ReviewService>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&ReviewService) -> Result<T, ReviewError> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&service)).await {
        Ok(result) => Ok(Json(result?)),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

async fn list_items(State(svc): State<Arc<ReviewService>>, Path(cycle): Path<String>) -> ApiResult<Vec<ItemSummary>> {
    blocking(svc, move |s| Ok(s.list_pending(&CycleId::from(cycle.as_str()))?.iter().map(ItemSummary::from).collect())).await
}

async fn get_item(State(svc): State<Arc<ReviewService>>, Path(id): Path<String>) -> ApiResult<ItemDetail> {
    blocking(svc, move |s| {
        let item = s.item(&id)?;
        Ok(ItemDetail { model_score: item.model_score(), item })
    })
    .await
}

async fn post_correction(
    State(svc): State<Arc<ReviewService>>,
    Path(id): Path<String>,
    body: Result<Json<CorrectionRequest>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.body_text()).into_response(),
    };
    blocking(svc, move |s| s.submit_correction(&id, &req.note)).await.into_response()
}

async fn post_approval(
    State(svc): State<Arc<ReviewService>>,
    Path(id): Path<String>,
    body: Result<Json<ApprovalRequest>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let req = match body {
        Ok(Json(b)) => b,
        Err(axum::extract::rejection::JsonRejection::MissingJsonContentType(_)) => ApprovalRequest::default(),
        Err(e) => return ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.body_text()).into_response(),
    };
    blocking(svc, move |s| {
        let score = match req.final_score {
            Some(v) => v,
            None => s.item(&id)?.model_score().ok_or(ReviewError::InvalidScore(f64::NAN))?,
        };
        s.approve_scores(&id, score).map(|o| o.event)
    })
    .await
    .into_response()
}

async fn get_transcript(State(svc): State<Arc<ReviewService>>, Path(id): Path<String>) -> Response {
    blocking(svc, move |s| s.transcript(&id)).await.into_response()
}

pub fn router(service: Arc<ReviewService>) -> Router {
    Router::new()
        .route("/cycles/{id}/items", get(list_items))
        .route("/items/{id}", get(get_item))
        .route("/items/{id}/corrections", post(post_correction))
        .route("/items/{id}/approve", post(post_approval))
        .route("/items/{id}/transcript", get(get_transcript))
        .with_state(service)
}

/// Serves until the process is stopped.
pub async fn serve(service: Arc<ReviewService>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "review console listening");
    axum::serve(listener, router(service)).await
}
