//! HTTP front end. Every handler decodes its body, calls into [`crate::ops`]
//! or the agent, and encodes the result as JSON.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use copilot_core::agents::{handle, SessionStore};
use copilot_core::paramsearch::{parse_axis, ParamGridSpec};
use copilot_core::{Copilot, CopilotError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ops::{self, Format};

pub struct AppState {
    pub copilot: Arc<Copilot>,
    pub sessions: SessionStore,
    pub feedback: Mutex<Vec<Value>>,
}

impl AppState {
    pub fn new(copilot: Arc<Copilot>) -> Self {
        let cfg = &copilot.config().session;
        let sessions = SessionStore::new(Duration::from_secs(cfg.ttl_secs), cfg.max_messages);
        Self {
            copilot,
            sessions,
            feedback: Mutex::new(Vec::new()),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: String,
    pub detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, detail: impl Into<String>) -> Self {
        Self {
            status,
            kind: kind.to_string(),
            detail: Value::String(detail.into()),
        }
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid-request", detail)
    }
}

pub fn status_for(kind: &str) -> StatusCode {
    match kind {
        "not-found" | "unknown-node" => StatusCode::NOT_FOUND,
        "empty-kb" => StatusCode::CONFLICT,
        "provider" | "generation" | "docgen" => StatusCode::BAD_GATEWAY,
        "knowledge-base" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<CopilotError> for ApiError {
    fn from(e: CopilotError) -> Self {
        let kind = e.kind();
        let detail = match &e {
            CopilotError::UnknownNode {
                class_type,
                install_hint,
            } => json!({ "message": e.to_string(), "class_type": class_type, "install_hint": install_hint }),
            _ => Value::String(e.to_string()),
        };
        Self {
            status: status_for(kind),
            kind: kind.to_string(),
            detail,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "kind": self.kind, "detail": self.detail } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn decode<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

/// Serializes in declaration order, so field order on the wire is stable.
fn encode<T: Serialize>(value: &T) -> ApiResult {
    Ok(Json(value).into_response())
}

/// Runs engine work off the async executor; provider calls block.
async fn blocking<T: Serialize + Send + 'static>(
    f: impl FnOnce() -> Result<T, CopilotError> + Send + 'static,
) -> ApiResult {
    let out = tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    encode(&out?)
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/chat", post(chat))
        .route("/api/recommend/{kind}", post(recommend))
        .route("/api/workflow/validate", post(validate))
        .route("/api/workflow/convert", post(convert))
        .route("/api/paramsearch", post(paramsearch))
        .route("/api/nodes/{class_type}", get(node))
        .route("/api/feedback", post(feedback))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such endpoint") })
        .with_state(state)
}

async fn healthz(State(state): State<Arc<AppState>>) -> ApiResult {
    encode(&ops::health(&state.copilot))
}

#[derive(Deserialize)]
struct ChatRequest {
    session_id: String,
    message: String,
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: ChatRequest = decode(&body)?;
    if req.session_id.trim().is_empty() {
        return Err(ApiError::bad_request("session_id must not be empty"));
    }
    blocking(move || {
        let session = state.sessions.get_or_create(&req.session_id);
        let mut session = session.lock().unwrap_or_else(|p| p.into_inner());
        Ok(handle(&req.message, &mut session, &state.copilot))
    })
    .await
}

#[derive(Deserialize)]
struct RecommendRequest {
    query: String,
    #[serde(default)]
    context: Option<String>,
}

async fn recommend(State(state): State<Arc<AppState>>, Path(kind): Path<String>, body: Bytes) -> ApiResult {
    let kind = ops::parse_kind(&kind)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not-found", format!("unknown entry kind `{kind}`")))?;
    let req: RecommendRequest = decode(&body)?;
    blocking(move || ops::recommend(kind, &req.query, req.context.as_deref(), &state.copilot)).await
}

#[derive(Deserialize)]
struct ValidateRequest {
    format: Format,
    payload: Value,
}

async fn validate(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: ValidateRequest = decode(&body)?;
    blocking(move || ops::validate_workflow(req.format, &req.payload, &state.copilot)).await
}

#[derive(Deserialize)]
struct ConvertRequest {
    from: Format,
    to: Format,
    payload: Value,
}

async fn convert(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: ConvertRequest = decode(&body)?;
    blocking(move || {
        let payload = ops::convert(req.from, req.to, &req.payload, &state.copilot)?;
        Ok(json!({ "format": req.to, "payload": payload }))
    })
    .await
}

/// A grid is either a full spec or a list of `node.input=v1,v2` strings.
#[derive(Deserialize)]
#[serde(untagged)]
enum GridBody {
    Spec(ParamGridSpec),
    Axes(Vec<String>),
}

#[derive(Deserialize)]
struct ParamSearchRequest {
    workflow: Value,
    grid: GridBody,
    #[serde(default)]
    parallelism: Option<usize>,
}

async fn paramsearch(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: ParamSearchRequest = decode(&body)?;
    let grid = match req.grid {
        GridBody::Spec(g) => g,
        GridBody::Axes(axes) => ParamGridSpec::new(
            axes.iter()
                .map(|a| parse_axis(a))
                .collect::<Result<_, _>>()
                .map_err(CopilotError::from)?,
        ),
    };
    blocking(move || {
        let workflow = ops::parse_workflow(Format::Json, &req.workflow, &state.copilot)?;
        ops::paramsearch(&workflow, &grid, req.parallelism, &state.copilot)
    })
    .await
}

async fn node(State(state): State<Arc<AppState>>, Path(class_type): Path<String>) -> ApiResult {
    encode(&ops::node_info(&class_type, &state.copilot)?)
}

#[derive(Deserialize)]
struct FeedbackRequest {
    accepted: bool,
    #[serde(flatten)]
    rest: serde_json::Map<String, Value>,
}

/// Records accept/reject signals. Nothing consumes them yet beyond the log.
async fn feedback(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: FeedbackRequest = decode(&body)?;
    tracing::info!(accepted = req.accepted, fields = ?req.rest.keys().collect::<Vec<_>>(), "feedback");
    let mut entry = req.rest;
    entry.insert("accepted".into(), Value::Bool(req.accepted));
    let mut log = state.feedback.lock().unwrap_or_else(|p| p.into_inner());
    log.push(Value::Object(entry));
    let accepted = log.iter().filter(|e| e["accepted"] == true).count();
    encode(&json!({ "recorded": log.len(), "accepted": accepted }))
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).await
}
