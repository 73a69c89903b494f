use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use mailtriage_core::corpus::{AgentAnswer, Category, Document, Source, StoreError};
use mailtriage_core::features::vectorize;
use mailtriage_core::learners::{predict, Family};
use mailtriage_core::stp::{extract, Mode};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::state::{AppState, RelearnError, RelearnRequest};

pub const PROPOSALS: usize = 5;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownCategory(_) => Self::new(StatusCode::NOT_FOUND, "unknown_category", e.to_string()),
            StoreError::EmptyText => Self::bad_request(e.to_string()),
            StoreError::InvalidCategory { .. } => Self::bad_request(e.to_string()),
            StoreError::DuplicateId(_) => Self::new(StatusCode::CONFLICT, "duplicate_id", e.to_string()),
            StoreError::NotTrainable { .. } | StoreError::EmptyCorpus => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "not_trainable", e.to_string())
            }
            StoreError::Io { .. } | StoreError::Corrupt { .. } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store", e.to_string())
            }
        }
    }
}

impl From<RelearnError> for ApiError {
    fn from(e: RelearnError) -> Self {
        match e {
            RelearnError::Busy => Self::new(StatusCode::CONFLICT, "relearn_running", e.to_string()),
            RelearnError::BadRequest(m) => Self::bad_request(m),
            RelearnError::Store(s) => s.into(),
            RelearnError::Pipeline(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "training_failed", e.to_string()),
            RelearnError::Task(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "training_failed", e.to_string()),
        }
    }
}

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

/// JSON body extractor whose rejections use the service error shape.
pub struct Body<T>(T);

impl<S: Send + Sync, T: serde::de::DeserializeOwned> axum::extract::FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::bad_request(e.body_text())),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/classify", post(classify))
        .route("/answers", post(submit_answer))
        .route("/history/{sender}", get(history))
        .route("/categories", get(categories).post(upsert_category))
        .route("/admin/relearn", post(relearn))
        .route("/health", get(health))
        .route("/model", get(model_info))
        .with_state(state)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Span {
    /// Character offsets into `text`, end exclusive.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyRequest {
    pub text: String,
    #[serde(default)]
    pub span: Option<Span>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Proposal {
    pub category_id: String,
    pub name: String,
    pub answer_template: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub model_version: u64,
    pub model_fingerprint: String,
    pub mode: Mode,
    pub fallback_used: bool,
    pub span: Option<Span>,
    pub proposals: Vec<Proposal>,
}

fn select_span(text: &str, span: Option<Span>) -> Result<&str, ApiError> {
    let Some(Span { start, end }) = span else {
        return Ok(text);
    };
    let n = text.chars().count();
    if start >= end || end > n {
        return Err(ApiError::bad_request(format!(
            "span {start}..{end} is not a non-empty range within {n} characters"
        )));
    }
    let byte = |c: usize| text.char_indices().nth(c).map_or(text.len(), |(b, _)| b);
    Ok(&text[byte(start)..byte(end)])
}

async fn classify(State(state): Shared, Body(req): Body<ClassifyRequest>) -> ApiResult<ClassifyResponse> {
    let slot = state
        .model()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_model", "no active model; run a relearn"))?;
    let part = select_span(&req.text, req.span)?;
    if part.trim().is_empty() {
        return Err(ApiError::bad_request("text is empty"));
    }
    let c = &slot.classifier;
    let extracted = extract(part, c.mode, &state.resources);
    let ranked = predict(&c.model, &vectorize(&extracted, &c.relevancy))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "predict", e.to_string()))?;
    let proposals = {
        let store = state.store();
        let registry = store.registry();
        ranked
            .top(PROPOSALS)
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cat = registry.get(&r.category);
                Proposal {
                    category_id: r.category.clone(),
                    name: cat.map_or_else(|| r.category.clone(), |c| c.name.clone()),
                    answer_template: cat.map(|c| c.answer_template.clone()).unwrap_or_default(),
                    score: r.score,
                    rank: i + 1,
                }
            })
            .collect()
    };
    Ok(Json(ClassifyResponse {
        model_version: slot.version,
        model_fingerprint: slot.fingerprint.clone(),
        mode: c.mode,
        fallback_used: extracted.fallback_used,
        span: req.span,
        proposals,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    /// A document already in the store; alternatively pass `text` inline.
    pub doc_id: Option<String>,
    pub text: Option<String>,
    pub sender: Option<String>,
    pub received_at: Option<DateTime<Utc>>,
    pub category_id: String,
    pub edited_text: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub record_id: String,
    pub category_id: String,
    pub answered_at: DateTime<Utc>,
    pub elapsed_seconds: i64,
}

async fn submit_answer(
    State(state): Shared,
    Body(req): Body<AnswerRequest>,
) -> Result<(StatusCode, Json<AnswerResponse>), ApiError> {
    let answered_at = state.now();
    let mut store = state.store();
    let mut doc = match (&req.doc_id, &req.text) {
        (Some(id), None) => {
            let orig = store
                .get(id)
                .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_document", format!("unknown document `{id}`")))?;
            let mut d = Document::new("", orig.sender.clone(), orig.received_at, orig.text.clone(), None);
            d.answer = Some(AgentAnswer {
                edited_text: None,
                answered_at,
                source_doc: Some(id.clone()),
            });
            d
        }
        (None, Some(text)) => {
            let mut d = Document::new(
                "",
                req.sender.clone().unwrap_or_default(),
                req.received_at.unwrap_or(answered_at),
                text.clone(),
                None,
            );
            d.answer = Some(AgentAnswer {
                edited_text: None,
                answered_at,
                source_doc: None,
            });
            d
        }
        _ => return Err(ApiError::bad_request("give exactly one of doc_id or text")),
    };
    if let Some(a) = doc.answer.as_mut() {
        a.edited_text = req.edited_text.clone();
    }
    let received_at = doc.received_at;
    let record_id = store.record_classification(doc, &req.category_id)?;
    Ok((
        StatusCode::CREATED,
        Json(AnswerResponse {
            record_id,
            category_id: req.category_id,
            answered_at,
            elapsed_seconds: (answered_at - received_at).num_seconds(),
        }),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub doc_id: String,
    pub received_at: DateTime<Utc>,
    pub text: String,
    pub category_id: Option<String>,
    pub category_name: Option<String>,
    pub source: Source,
    pub answered_at: Option<DateTime<Utc>>,
    pub edited_text: Option<String>,
    pub source_doc: Option<String>,
    /// Receipt to answer record, in seconds.
    pub elapsed_seconds: Option<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryResponse {
    pub sender: String,
    pub entries: Vec<HistoryEntry>,
}

async fn history(State(state): Shared, Path(sender): Path<String>) -> Json<HistoryResponse> {
    let store = state.store();
    let entries = store
        .by_sender(&sender)
        .into_iter()
        .map(|d| HistoryEntry {
            doc_id: d.id.clone(),
            received_at: d.received_at,
            text: d.text.clone(),
            category_id: d.category_id.clone(),
            category_name: d
                .category_id
                .as_deref()
                .and_then(|c| store.registry().get(c))
                .map(|c| c.name.clone()),
            source: d.source,
            answered_at: d.answer.as_ref().map(|a| a.answered_at),
            edited_text: d.answer.as_ref().and_then(|a| a.edited_text.clone()),
            source_doc: d.answer.as_ref().and_then(|a| a.source_doc.clone()),
            elapsed_seconds: d.answer.as_ref().map(|a| (a.answered_at - d.received_at).num_seconds()),
        })
        .collect();
    Json(HistoryResponse { sender, entries })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum CategoryStatus {
    Learnable,
    NotYetLearnable,
    Inactive,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CategoryView {
    pub id: String,
    pub name: String,
    pub answer_template: String,
    pub active: bool,
    pub doc_count: usize,
    pub status: CategoryStatus,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CategoriesResponse {
    pub min_docs: usize,
    pub categories: Vec<CategoryView>,
}

fn category_view(c: &Category, doc_count: usize, min_docs: usize) -> CategoryView {
    let status = if !c.active {
        CategoryStatus::Inactive
    } else if doc_count >= min_docs {
        CategoryStatus::Learnable
    } else {
        CategoryStatus::NotYetLearnable
    };
    CategoryView {
        id: c.id.clone(),
        name: c.name.clone(),
        answer_template: c.answer_template.clone(),
        active: c.active,
        doc_count,
        status,
    }
}

fn doc_count(store: &mailtriage_core::corpus::CorpusStore, id: &str) -> usize {
    store
        .documents()
        .iter()
        .filter(|d| d.category_id.as_deref() == Some(id))
        .count()
}

async fn categories(State(state): Shared) -> Json<CategoriesResponse> {
    let min_docs = state.config.min_docs;
    let store = state.store();
    let mut counts = std::collections::HashMap::new();
    for d in store.documents() {
        if let Some(c) = &d.category_id {
            *counts.entry(c.as_str()).or_insert(0usize) += 1;
        }
    }
    let categories = store
        .registry()
        .iter()
        .map(|c| category_view(c, counts.get(c.id.as_str()).copied().unwrap_or(0), min_docs))
        .collect();
    Json(CategoriesResponse { min_docs, categories })
}

async fn upsert_category(State(state): Shared, Body(cat): Body<Category>) -> ApiResult<CategoryView> {
    let mut store = state.store();
    store.upsert_category(cat.clone())?;
    Ok(Json(category_view(&cat, doc_count(&store, &cat.id), state.config.min_docs)))
}

/// An empty body relearns with the configured defaults.
async fn relearn(State(state): Shared, body: axum::body::Bytes) -> ApiResult<crate::state::RelearnOutcome> {
    let req: RelearnRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RelearnRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    Ok(Json(state.relearn(req).await?))
}

async fn health(State(state): Shared) -> Json<serde_json::Value> {
    let model = state.model();
    Json(json!({
        "status": "ok",
        "model_loaded": model.is_some(),
        "model_version": model.map(|m| m.version),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub version: u64,
    pub fingerprint: String,
    pub mode: Mode,
    pub family: Family,
    pub spec: serde_json::Value,
    pub n_features: usize,
    pub classes: Vec<String>,
    pub built_at: DateTime<Utc>,
    pub n_docs: Option<usize>,
}

async fn model_info(State(state): Shared) -> ApiResult<ModelInfo> {
    let slot = state
        .model()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_model", "no active model"))?;
    let m = &slot.classifier.model;
    Ok(Json(ModelInfo {
        version: slot.version,
        fingerprint: slot.fingerprint.clone(),
        mode: slot.classifier.mode,
        family: m.family(),
        spec: serde_json::to_value(&m.spec).unwrap_or_default(),
        n_features: m.n_features,
        classes: m.classes.clone(),
        built_at: slot.built_at,
        n_docs: slot.n_docs,
    }))
}
