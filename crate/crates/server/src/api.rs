//! Routes under `/api/v1` plus the unauthenticated `/healthz`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mizsrv_core::wire::{
    CancelResponse, FormatResponse, LintResponse, StatusDocument, SubmitResponse, TextRequest,
    VersionEntry, VersionsResponse,
};
use mizsrv_core::{
    annotate, format, lint, Command, JobEngine, JobId, JobRequest, MessageCatalog, SubmitError,
    ToolRegistry,
};
use serde::de::DeserializeOwned;
use serde_json::json;

/// JSON escaping can expand text up to six-fold (`\u00XX`).
const BODY_EXPANSION: usize = 6;
const BODY_SLACK: usize = 64 * 1024;

#[derive(Debug)]
pub struct AppState {
    pub engine: Arc<JobEngine>,
    pub registry: Arc<ToolRegistry>,
    pub tokens: Vec<String>,
    pub poll_hint_ms: u64,
    pub max_inline_bytes: usize,
    pub catalog: MessageCatalog,
}

impl AppState {
    fn body_limit(&self) -> usize {
        self.max_inline_bytes
            .saturating_mul(BODY_EXPANSION)
            .saturating_add(BODY_SLACK)
    }

    fn catalog_for(&self, version: &str) -> &MessageCatalog {
        self.registry
            .get(version)
            .map_or(&self.catalog, |v| &v.messages)
    }
}

/// Everything except `/healthz`, unknown paths included, sits behind the token check.
pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/jobs", post(submit_job))
        .route("/jobs/{id}", get(job_status).delete(cancel_job))
        .route("/versions", get(versions))
        .route("/format", post(format_text))
        .route("/lint", post(lint_text));
    let protected = Router::new()
        .nest("/api/v1", api)
        .fallback(not_found)
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .merge(protected)
}

/// Every path the API answers, for auth enumeration. `{id}` stands for a job id.
pub const ROUTES: &[(&str, &str)] = &[
    ("POST", "/api/v1/jobs"),
    ("GET", "/api/v1/jobs/{id}"),
    ("DELETE", "/api/v1/jobs/{id}"),
    ("GET", "/api/v1/versions"),
    ("POST", "/api/v1/format"),
    ("POST", "/api/v1/lint"),
];

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    reason: &'static str,
    message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, reason: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            reason,
            message: message.into(),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", what)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "reason": self.reason, "message": self.message }));
        (self.status, body).into_response()
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        let status = match e {
            SubmitError::QueueFull(_) => StatusCode::TOO_MANY_REQUESTS,
            SubmitError::TooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            SubmitError::ShuttingDown => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.reason(), e.to_string())
    }
}

/// Constant-time in the token length; the early exit on length leaks only that.
fn token_matches(given: &[u8], want: &[u8]) -> bool {
    given.len() == want.len() && given.iter().zip(want).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

async fn require_token(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    let ok = presented.is_some_and(|p| {
        state
            .tokens
            .iter()
            .fold(false, |hit, t| hit | token_matches(p.as_bytes(), t.as_bytes()))
    });
    if !ok {
        let mut resp = ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or invalid bearer token",
        )
        .into_response();
        resp.headers_mut()
            .insert(header::WWW_AUTHENTICATE, "Bearer".parse().unwrap());
        return resp;
    }
    next.run(req).await
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

/// JSON body with the server's size limit and uniform error documents.
pub struct ApiJson<T>(pub T);

impl<T: DeserializeOwned> FromRequest<Arc<AppState>> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &Arc<AppState>) -> Result<Self, ApiError> {
        let limit = state.body_limit();
        let body = axum::body::to_bytes(req.into_body(), limit)
            .await
            .map_err(|_| {
                ApiError::new(
                    StatusCode::PAYLOAD_TOO_LARGE,
                    "too_large",
                    format!("request body exceeds {limit} bytes"),
                )
            })?;
        parse_body(&body).map(ApiJson)
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()))
}

async fn submit_job(
    State(state): State<Arc<AppState>>,
    ApiJson(req): ApiJson<JobRequest>,
) -> Result<(StatusCode, Json<SubmitResponse>), ApiError> {
    let job_id = state.engine.submit(req)?;
    Ok((StatusCode::ACCEPTED, Json(SubmitResponse { job_id })))
}

fn parse_id(raw: &str) -> Result<JobId, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::not_found(format!("job {raw:?} not found")))
}

async fn job_status(
    State(state): State<Arc<AppState>>,
    Path(raw): Path<String>,
) -> Result<Json<StatusDocument>, ApiError> {
    let id = parse_id(&raw)?;
    let st = state
        .engine
        .status(id)
        .map_err(|e| ApiError::not_found(e.to_string()))?;
    let cat = state.catalog_for(&st.toolchain_version);
    Ok(Json(StatusDocument::build(st, cat, state.poll_hint_ms)))
}

async fn cancel_job(
    State(state): State<Arc<AppState>>,
    Path(raw): Path<String>,
) -> Result<Json<CancelResponse>, ApiError> {
    let id = parse_id(&raw)?;
    let canceled = state
        .engine
        .cancel(id)
        .map_err(|e| ApiError::not_found(e.to_string()))?;
    Ok(Json(CancelResponse { canceled }))
}

/// Known commands first in their canonical order, then any others by name.
fn ordered_commands(mut names: Vec<String>) -> Vec<String> {
    names.sort_by_key(|n| {
        let rank = Command::from_name(n).map_or(Command::ALL.len(), |c| c as usize);
        (rank, n.clone())
    });
    names
}

async fn versions(State(state): State<Arc<AppState>>) -> Json<VersionsResponse> {
    let versions = state
        .registry
        .versions()
        .map(|v| VersionEntry {
            name: v.name.clone(),
            commands: ordered_commands(v.command_names()),
        })
        .collect();
    Json(VersionsResponse { versions })
}

fn check_text(state: &AppState, req: &TextRequest) -> Result<(), ApiError> {
    if req.text.len() > state.max_inline_bytes {
        return Err(SubmitError::TooLarge {
            size: req.text.len(),
            limit: state.max_inline_bytes,
        }
        .into());
    }
    req.options
        .validate()
        .map_err(|e| SubmitError::InvalidOptions(e.to_string()).into())
}

async fn format_text(
    State(state): State<Arc<AppState>>,
    ApiJson(req): ApiJson<TextRequest>,
) -> Result<Json<FormatResponse>, ApiError> {
    check_text(&state, &req)?;
    Ok(Json(FormatResponse {
        formatted: format(&req.text, &req.options),
    }))
}

async fn lint_text(
    State(state): State<Arc<AppState>>,
    ApiJson(req): ApiJson<TextRequest>,
) -> Result<Json<LintResponse>, ApiError> {
    check_text(&state, &req)?;
    let errs = lint(&req.text, &req.options);
    Ok(Json(LintResponse {
        errors: annotate(&errs, &state.catalog),
    }))
}
