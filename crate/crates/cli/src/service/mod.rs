//! JSON-over-HTTP API for rulemap storage, case evaluation and runs.
//!
//! | Method | Path | |
//! |---|---|---|
//! | GET | `/rulemaps` | stored ids |
//! | GET, PUT | `/rulemaps/{id}` | current canonical document (`?version=N` for older ones) |
//! | GET | `/rulemaps/{id}/versions` | revision history |
//! | PUT | `/rulemaps/{id}/nodes/{node}/context` | `{"context": "..."}` |
//! | POST | `/rulemaps/{id}/evaluate` | [`EvaluateRequest`] → trace |
//! | GET, POST | `/runs` | list / submit `{"config": path}` |
//! | GET | `/runs/{id}` | one run |

pub mod runs;
pub mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::NaiveDate;
use rulemap_core::canonical::{from_canonical, to_canonical};
use rulemap_core::leaf::{CaseRecord, Environment, FieldValue};
use rulemap_core::llm::ChatClient;
use rulemap_core::{
    evaluate, EvalError, EvalMode, EvalOptions, EvaluationTrace, FailurePolicy, TruthAssignment,
};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use runs::Runs;
use store::{Store, StoreError};

/// Shared service state.
pub struct AppState {
    pub store: Store,
    pub runs: Arc<Runs>,
    /// Base environment for evaluations; its client may be absent, in which
    /// case only fully overridden or symbolic maps can be evaluated.
    pub env: Environment,
    /// Used when a request names no evaluation date.
    pub default_date: NaiveDate,
    permits: Semaphore,
}

impl AppState {
    pub fn new(
        store: Store,
        client: Option<Arc<dyn ChatClient>>,
        default_date: NaiveDate,
        parallelism: usize,
    ) -> Self {
        let mut env = Environment::offline(default_date);
        env.client = client;
        AppState {
            store,
            runs: Arc::new(Runs::default()),
            env,
            default_date,
            permits: Semaphore::new(parallelism.max(1)),
        }
    }
}

pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({"error": kind, "message": message.into()}),
        }
    }

    fn with(mut self, key: &str, v: Value) -> Self {
        self.body[key] = v;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::NotFound(_)
            | StoreError::VersionNotFound { .. }
            | StoreError::NodeNotFound { .. } => {
                ApiError::new(StatusCode::NOT_FOUND, "not_found", msg)
            }
            StoreError::NotALeaf(node) => {
                ApiError::new(StatusCode::CONFLICT, "not_a_leaf", msg).with("node_id", json!(node))
            }
            StoreError::BadId(_) | StoreError::IdMismatch { .. } => {
                ApiError::new(StatusCode::BAD_REQUEST, "bad_id", msg)
            }
            StoreError::Invalid(issues) => {
                ApiError::new(StatusCode::BAD_REQUEST, "invalid_rulemap", msg)
                    .with("issues", json!(issues))
            }
            StoreError::Corrupt(_) | StoreError::Io(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", msg)
            }
        }
    }
}

fn bad_json(e: JsonRejection) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

type Shared = State<Arc<AppState>>;

async fn list_rulemaps(State(s): Shared) -> Result<Json<Value>, ApiError> {
    let ids = blocking(move || Ok(s.store.list()?)).await?;
    Ok(Json(json!({ "rulemaps": ids })))
}

#[derive(Deserialize)]
struct VersionQuery {
    version: Option<u64>,
}

async fn get_rulemap(
    State(s): Shared,
    Path(id): Path<String>,
    Query(q): Query<VersionQuery>,
) -> Result<Json<Value>, ApiError> {
    let map = blocking(move || Ok(s.store.get(&id, q.version)?)).await?;
    Ok(Json(to_canonical(&map)))
}

async fn put_rulemap(
    State(s): Shared,
    Path(id): Path<String>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(doc) = body.map_err(bad_json)?;
    let map = from_canonical(&doc).map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "schema", e.to_string()).with("path", json!(e.path))
    })?;
    let out = blocking(move || Ok(s.store.put(&id, map)?)).await?;
    Ok(Json(json!(out)))
}

async fn versions(State(s): Shared, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let h = blocking(move || Ok(s.store.history(&id)?)).await?;
    Ok(Json(json!({ "versions": h })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextBody {
    context: String,
}

async fn put_context(
    State(s): Shared,
    Path((id, node)): Path<(String, String)>,
    body: Result<Json<ContextBody>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let Json(b) = body.map_err(bad_json)?;
    let out = blocking(move || Ok(s.store.update_leaf_context(&id, &node, b.context)?)).await?;
    Ok(Json(json!(out)))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    #[serde(default)]
    pub case_text: String,
    #[serde(default)]
    pub case_id: Option<String>,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldValue>,
    #[serde(default)]
    pub mode: EvalMode,
    #[serde(default)]
    pub policy: FailurePolicy,
    /// Leaf values substituted without consulting any evaluator.
    #[serde(default)]
    pub overrides: BTreeMap<String, bool>,
    #[serde(default)]
    pub version: Option<u64>,
    #[serde(default)]
    pub evaluation_date: Option<NaiveDate>,
    /// Model for LLM leaves; the service default when absent.
    #[serde(default)]
    pub model: Option<String>,
}

impl EvaluateRequest {
    pub fn case(&self) -> CaseRecord {
        CaseRecord {
            id: self.case_id.clone().unwrap_or_else(|| "adhoc".to_owned()),
            text: self.case_text.clone(),
            fields: self.fields.clone(),
        }
    }

    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            mode: self.mode,
            policy: self.policy,
            overrides: TruthAssignment(self.overrides.clone()),
        }
    }
}

async fn evaluate_case(
    State(s): Shared,
    Path(id): Path<String>,
    body: Result<Json<EvaluateRequest>, JsonRejection>,
) -> Result<Json<EvaluationTrace>, ApiError> {
    let Json(req) = body.map_err(bad_json)?;
    let _permit = s.permits.acquire().await.map_err(|e| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "shutting_down",
            e.to_string(),
        )
    })?;
    let st = Arc::clone(&s);
    let trace = blocking(move || {
        let s = st;
        let map = s.store.get(&id, req.version)?;
        let mut env = s.env.clone();
        env.evaluation_date = req.evaluation_date.unwrap_or(s.default_date);
        if let Some(m) = &req.model {
            env.decoding.model = m.clone();
        }
        evaluate(&map, &req.case(), &env, &req.options()).map_err(|e| match e {
            EvalError::LeafFailure(ref f) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "leaf_failure", e.to_string())
                    .with("node_id", json!(f.node_id))
                    .with("cause", json!(f.kind))
            }
            EvalError::UnknownLeaf(ref leaf) => {
                ApiError::new(StatusCode::BAD_REQUEST, "unknown_leaf", e.to_string())
                    .with("node_id", json!(leaf))
            }
            other => ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "evaluation",
                other.to_string(),
            ),
        })
    })
    .await?;
    Ok(Json(trace))
}

async fn list_runs(State(s): Shared) -> Json<Value> {
    Json(json!({ "runs": s.runs.list() }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBody {
    config: PathBuf,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

async fn submit_run(
    State(s): Shared,
    body: Result<Json<RunBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Json(b) = body.map_err(bad_json)?;
    let runs = Arc::clone(&s.runs);
    let rec = blocking(move || {
        runs.submit(b.config, b.output_dir)
            .map_err(|m| ApiError::new(StatusCode::BAD_REQUEST, "config", m))
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(json!(rec))))
}

async fn get_run(State(s): Shared, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    s.runs.get(&id).map(|r| Json(json!(r))).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("run '{id}' not found"),
        )
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/rulemaps", get(list_rulemaps))
        .route("/rulemaps/{id}", get(get_rulemap).put(put_rulemap))
        .route("/rulemaps/{id}/versions", get(versions))
        .route("/rulemaps/{id}/nodes/{node}/context", put(put_context))
        .route("/rulemaps/{id}/evaluate", post(evaluate_case))
        .route("/runs", get(list_runs).post(submit_run))
        .route("/runs/{id}", get(get_run))
        .layer(tower_http::cors::CorsLayer::permissive())
        .with_state(state)
}
