//! HTTP API over an analysis directory and the label store.
//!
//! | method | path | |
//! |--------|------|-|
//! | GET  | `/api/stats` | `summary.json` verbatim |
//! | GET  | `/api/clone-sets` | ranked page; query `min_nloc` (20), `min_threads` (2), `page` (1), `per_page` (50, max 200); total in `X-Total-Count` |
//! | GET  | `/api/clone-sets/{key}` | clone-set document |
//! | GET  | `/api/clone-sets/{key}/labels` | labels of one set, oldest first |
//! | POST | `/api/clone-sets/{key}/labels` | append a label, 201 |
//! | GET  | `/api/labels` | every label, oldest first |

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use clonescope_core::SetKey;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::data::DataSet;
use crate::labels::{Label, LabelDraft, LabelError, LabelStore};

pub const TOTAL_COUNT_HEADER: &str = "x-total-count";
pub const MAX_PER_PAGE: usize = 200;

#[derive(Clone)]
pub struct AppState {
    pub data: Arc<DataSet>,
    pub labels: Arc<Mutex<LabelStore>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    min_nloc: Option<usize>,
    min_threads: Option<usize>,
    page: Option<usize>,
    per_page: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListItem {
    pub key: SetKey,
    pub fingerprint: String,
    pub nloc: usize,
    pub thread_count: usize,
    pub occurrence_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListPage {
    pub total: usize,
    pub page: usize,
    pub per_page: usize,
    pub min_nloc: usize,
    pub min_threads: usize,
    pub items: Vec<ListItem>,
}

fn json_body<T: Serialize>(status: StatusCode, value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("response serializes");
    (
        status,
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        body,
    )
        .into_response()
}

async fn stats(State(state): State<AppState>) -> Response {
    (
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        state.data.summary_body.clone(),
    )
        .into_response()
}

async fn list_sets(State(state): State<AppState>, Query(q): Query<ListQuery>) -> ApiResult<Response> {
    let min_nloc = q.min_nloc.unwrap_or(20);
    let min_threads = q.min_threads.unwrap_or(2);
    let page = q.page.unwrap_or(1);
    let per_page = q.per_page.unwrap_or(50);
    if page < 1 {
        return Err(ApiError::bad_request("page must be >= 1"));
    }
    if !(1..=MAX_PER_PAGE).contains(&per_page) {
        return Err(ApiError::bad_request(format!("per_page must be within 1..={MAX_PER_PAGE}")));
    }
    let floor = state.data.min_threads_floor();
    if min_threads < floor.max(1) {
        return Err(ApiError::bad_request(format!(
            "min_threads must be >= {} (the threshold this data set was analysed with)",
            floor.max(1)
        )));
    }

    let matching: Vec<_> = state.data.filtered(min_threads, min_nloc).collect();
    let items = matching
        .iter()
        .skip((page - 1).saturating_mul(per_page))
        .take(per_page)
        .map(|d| ListItem {
            key: d.key,
            fingerprint: d.fingerprint.clone(),
            nloc: d.nloc,
            thread_count: d.thread_count,
            occurrence_count: d.occurrences.len(),
        })
        .collect();
    let body = ListPage {
        total: matching.len(),
        page,
        per_page,
        min_nloc,
        min_threads,
        items,
    };
    let mut resp = json_body(StatusCode::OK, &body);
    resp.headers_mut()
        .insert(TOTAL_COUNT_HEADER, HeaderValue::from(matching.len()));
    Ok(resp)
}

fn parse_key(raw: &str) -> ApiResult<SetKey> {
    raw.parse().map_err(ApiError::bad_request)
}

fn known_key(state: &AppState, raw: &str) -> ApiResult<SetKey> {
    let key = parse_key(raw)?;
    if state.data.get(key).is_none() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown clone set {key}")));
    }
    Ok(key)
}

async fn get_set(State(state): State<AppState>, Path(raw): Path<String>) -> ApiResult<Response> {
    let key = known_key(&state, &raw)?;
    Ok(json_body(StatusCode::OK, state.data.get(key).unwrap()))
}

async fn set_labels(State(state): State<AppState>, Path(raw): Path<String>) -> ApiResult<Response> {
    let key = known_key(&state, &raw)?;
    let mut labels = state.labels.lock().unwrap().for_set(key);
    labels.sort_by_key(|l| l.created_at);
    Ok(json_body(StatusCode::OK, &labels))
}

async fn post_label(
    State(state): State<AppState>,
    Path(raw): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let key = known_key(&state, &raw)?;
    if let Some(ct) = headers.get(header::CONTENT_TYPE) {
        let ct = ct.to_str().unwrap_or("");
        if !ct.starts_with("application/json") {
            return Err(ApiError::new(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "expected application/json",
            ));
        }
    }
    let draft: LabelDraft = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    draft
        .validate()
        .map_err(|m| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m))?;

    let store = state.labels.clone();
    let label = tokio::task::spawn_blocking(move || store.lock().unwrap().append(key, draft))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| match e {
            LabelError::Invalid(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        })?;
    tracing::info!(set = %key, analyst = %label.analyst, "label stored");
    Ok(json_body(StatusCode::CREATED, &label))
}

async fn all_labels(State(state): State<AppState>) -> Response {
    let labels: Vec<Label> = state.labels.lock().unwrap().all().to_vec();
    json_body(StatusCode::OK, &labels)
}

async fn index_page() -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        "clonescope review API\n\nGET  /api/stats\nGET  /api/clone-sets\nGET  /api/clone-sets/{key}\nGET  /api/clone-sets/{key}/labels\nPOST /api/clone-sets/{key}/labels\nGET  /api/labels\n",
    )
}

/// Builds the router. Static UI assets are served under `/` when `assets`
/// is given.
pub fn router(state: AppState, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/stats", get(stats))
        .route("/api/clone-sets", get(list_sets))
        .route("/api/clone-sets/{key}", get(get_set))
        .route("/api/clone-sets/{key}/labels", get(set_labels).post(post_label))
        .route("/api/labels", get(all_labels))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index_page)),
    }
}
