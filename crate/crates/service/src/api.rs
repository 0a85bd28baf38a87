//! HTTP/JSON API consumed by the arbitrator console.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/cases` | `DisputeCase` without outcome | 201 `{case_id}` |
//! | GET | `/queue?limit=&order=` | | `[QueueEntry]` |
//! | GET | `/cases/{id}` | | [`CaseView`] |
//! | GET | `/cases/{id}/prediction` | | [`PredictionPayload`] |
//! | POST | `/cases/{id}/ruling` | `{winner, summary}` | [`CaseView`] |
//! | POST | `/cases/{id}/appeal` | `{party}` | [`CaseView`] |
//! | GET | `/stats` | | [`Stats`] |
//! | GET | `/healthz` | | `{status, model_version}` |
//!
//! Errors are `{code, message}`. When a token is configured every route
//! except `/healthz` requires it in the `x-odr-token` header.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use odr_core::domain::{DisputeCase, OutcomeLabel, Party};
use odr_core::interpret::{explain_case, CaseExplanation, ExplainOptions};
use odr_core::learners::{load_model, ModelFile};
use odr_core::pipeline::TrainedPipeline;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, ServiceError};
use crate::queue::{build_queue, QueueEntry, QueueOrder};
use crate::store::{Appeal, CaseRecord, CaseStatus, Ruling, Store};

pub const TOKEN_HEADER: &str = "x-odr-token";

/// A trained pipeline together with the metadata of its model file.
#[derive(Debug)]
pub struct ActiveModel {
    pub pipeline: TrainedPipeline,
    pub file: ModelFile,
}

impl ActiveModel {
    pub fn from_file(file: ModelFile) -> Result<Self> {
        Ok(ActiveModel {
            pipeline: TrainedPipeline::from_model_file(&file)?,
            file,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(load_model(path)?)
    }

    pub fn version(&self) -> &str {
        self.file.model_version()
    }
}

/// Body of `GET /cases/{id}/prediction`, also printed by `odr explain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPayload {
    pub model_version: String,
    #[serde(flatten)]
    pub explanation: CaseExplanation,
}

/// Explanation seeds derive from the model's training seed, so every caller
/// holding the same model file gets the same payload.
pub fn prediction_payload(model: &ActiveModel, case: &DisputeCase, opts: &ExplainOptions) -> Result<PredictionPayload> {
    Ok(PredictionPayload {
        model_version: model.version().to_string(),
        explanation: explain_case(&model.pipeline, case, opts, model.pipeline.seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub case: DisputeCase,
    pub status: CaseStatus,
    pub created_ms: i64,
    pub rulings: Vec<Ruling>,
    pub appeals: Vec<Appeal>,
    /// Model versions that have issued a prediction for the case.
    pub predicted_by: Vec<String>,
}

impl From<&CaseRecord> for CaseView {
    fn from(r: &CaseRecord) -> Self {
        CaseView {
            case: r.case.clone(),
            status: r.status,
            created_ms: r.created_ms,
            rulings: r.rulings.clone(),
            appeals: r.appeals.clone(),
            predicted_by: r.predictions.keys().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub model_version: String,
    pub learner: String,
    pub n_train: usize,
    pub train_positive_rate: f64,
    /// Evaluation results stored with the model, if any.
    pub metrics: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub cases: usize,
    pub by_status: BTreeMap<CaseStatus, usize>,
    pub rulings: usize,
    pub appeals: usize,
    /// Share of ruled cases currently decided for the seller.
    pub seller_win_rate: Option<f64>,
    pub model: Option<ModelInfo>,
}

#[derive(Debug, Deserialize)]
pub struct RulingRequest {
    pub winner: Party,
    #[serde(default)]
    pub summary: String,
}

#[derive(Debug, Deserialize)]
pub struct AppealRequest {
    pub party: Party,
}

#[derive(Debug, Deserialize)]
pub struct QueueParams {
    pub limit: Option<usize>,
    pub order: Option<QueueOrder>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let (status, code) = match &e {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Duplicate(_) => (StatusCode::CONFLICT, "conflict"),
            ServiceError::IllegalTransition { .. } => (StatusCode::CONFLICT, "illegal_transition"),
            ServiceError::InvalidCase(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_case"),
            ServiceError::ModelNotReady => (StatusCode::SERVICE_UNAVAILABLE, "model_not_ready"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(e.status(), "bad_request", e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

pub struct AppState {
    pub store: RwLock<Store>,
    pub model: Option<Arc<ActiveModel>>,
    pub explain: ExplainOptions,
    pub queue_order: QueueOrder,
    pub token: Option<String>,
}

impl AppState {
    pub fn new(store: Store, model: Option<ActiveModel>) -> Self {
        AppState {
            store: RwLock::new(store),
            model: model.map(Arc::new),
            explain: ExplainOptions::default(),
            queue_order: QueueOrder::default(),
            token: None,
        }
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/cases", post(ingest))
        .route("/queue", get(queue))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/prediction", get(prediction))
        .route("/cases/{id}/ruling", post(ruling))
        .route("/cases/{id}/appeal", post(appeal))
        .route("/stats", get(stats))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/healthz", get(healthz))
        .merge(api)
        .with_state(state)
}

async fn require_token(State(s): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(expected) = &s.token {
        let given = req.headers().get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", format!("missing or wrong {TOKEN_HEADER}"))
                .into_response();
        }
    }
    next.run(req).await
}

async fn healthz(State(s): State<Shared>) -> Json<Value> {
    Json(serde_json::json!({
        "status": "ok",
        "model_version": s.model.as_ref().map(|m| m.version()),
    }))
}

async fn ingest(State(s): State<Shared>, body: std::result::Result<Json<DisputeCase>, JsonRejection>) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(case) = body?;
    let id = s.store.write().expect("store lock").ingest(case)?;
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "case_id": id }))))
}

async fn queue(State(s): State<Shared>, params: std::result::Result<Query<QueueParams>, QueryRejection>) -> ApiResult<Json<Vec<QueueEntry>>> {
    let Query(params) = params?;
    let store = s.store.read().expect("store lock");
    let score = |r: &CaseRecord| {
        let m = s.model.as_ref()?;
        Some(match r.predictions.get(m.version()) {
            Some(e) => e.p_seller_wins,
            None => m.pipeline.predict_case(&r.case).p_seller_wins,
        })
    };
    Ok(Json(build_queue(
        store.state(),
        score,
        params.order.unwrap_or(s.queue_order),
        params.limit,
    )))
}

async fn get_case(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<CaseView>> {
    let store = s.store.read().expect("store lock");
    let r = store.get(&id).ok_or_else(|| ServiceError::NotFound(id.clone()))?;
    Ok(Json(r.into()))
}

async fn prediction(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<PredictionPayload>> {
    let case = {
        let store = s.store.read().expect("store lock");
        let r = store.get(&id).ok_or_else(|| ServiceError::NotFound(id.clone()))?;
        let model = s.model.as_ref().ok_or(ServiceError::ModelNotReady)?;
        if let Some(e) = r.predictions.get(model.version()) {
            return Ok(Json(PredictionPayload {
                model_version: model.version().to_string(),
                explanation: e.clone(),
            }));
        }
        r.case.clone()
    };
    let worker = s.clone();
    let payload = tokio::task::spawn_blocking(move || {
        let model = worker.model.as_ref().expect("checked above");
        prediction_payload(model, &case, &worker.explain)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let mut store = s.store.write().expect("store lock");
    // Another request may have issued this version's prediction meanwhile.
    if let Some(e) = store.get(&id).and_then(|r| r.predictions.get(&payload.model_version)) {
        return Ok(Json(PredictionPayload {
            model_version: payload.model_version,
            explanation: e.clone(),
        }));
    }
    store.record_prediction(&id, &payload.model_version, payload.explanation.clone())?;
    Ok(Json(payload))
}

async fn ruling(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: std::result::Result<Json<RulingRequest>, JsonRejection>,
) -> ApiResult<Json<CaseView>> {
    let Json(req) = body?;
    let mut store = s.store.write().expect("store lock");
    Ok(Json(store.record_ruling(&id, req.winner, &req.summary)?.into()))
}

async fn appeal(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: std::result::Result<Json<AppealRequest>, JsonRejection>,
) -> ApiResult<Json<CaseView>> {
    let Json(req) = body?;
    let mut store = s.store.write().expect("store lock");
    Ok(Json(store.file_appeal(&id, req.party)?.into()))
}

async fn stats(State(s): State<Shared>) -> Json<Stats> {
    let store = s.store.read().expect("store lock");
    let cases = &store.state().cases;
    let mut by_status = BTreeMap::new();
    for r in cases.values() {
        *by_status.entry(r.status).or_insert(0) += 1;
    }
    let ruled: Vec<&CaseRecord> = cases.values().filter(|r| r.status == CaseStatus::Ruled).collect();
    let seller = ruled
        .iter()
        .filter(|r| r.case.outcome == Some(OutcomeLabel::SellerWins))
        .count();
    Json(Stats {
        cases: cases.len(),
        by_status,
        rulings: cases.values().map(|r| r.rulings.len()).sum(),
        appeals: cases.values().map(|r| r.appeals.len()).sum(),
        seller_win_rate: (!ruled.is_empty()).then(|| seller as f64 / ruled.len() as f64),
        model: s.model.as_ref().map(|m| ModelInfo {
            model_version: m.version().to_string(),
            learner: m.pipeline.spec.kind().to_string(),
            n_train: m.file.metadata.n_train,
            train_positive_rate: m.file.metadata.train_positive_rate,
            metrics: m.file.metadata.extra.clone(),
        }),
    })
}
