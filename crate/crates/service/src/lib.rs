//! Local JSON-over-HTTP session service for the interactive explorer.
//!
//! Synchronous endpoints (`/orbit`, `/chaos`, `/manifold`) run the core
//! kernels on blocking threads under a time budget; tangency scans run as
//! background jobs polled through `/jobs/{id}`. Each session, named by the
//! `x-session-id` header, keeps its own response cache keyed by a hash of the
//! endpoint and the canonical request body.

mod handlers;
pub mod transport;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tracelab_core::defaults::Precision;

pub use handlers::SystemSpec;

pub const SESSION_HEADER: &str = "x-session-id";
const DEFAULT_SESSION: &str = "default";
const MAX_SESSION_ID: usize = 128;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Longest a synchronous request may compute before answering 503.
    pub budget: Duration,
    /// The only origin allowed by CORS.
    pub ui_origin: String,
    /// Arithmetic for manifold work unless a request asks otherwise.
    pub precision: Precision,
    /// Synchronous computations allowed at once; further requests get 503.
    pub max_concurrent: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            budget: Duration::from_secs(10),
            ui_origin: "http://127.0.0.1:5173".into(),
            precision: Precision::Standard,
            max_concurrent: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(4),
        }
    }
}

/// A response as sent: status and JSON body bytes.
#[derive(Debug, Clone)]
pub struct Reply {
    pub status: StatusCode,
    pub body: Bytes,
}

impl Reply {
    pub fn json<T: Serialize>(status: StatusCode, value: &T) -> Self {
        let body = serde_json::to_vec(value).expect("response types serialize");
        Self {
            status,
            body: body.into(),
        }
    }
}

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        (
            self.status,
            [(header::CONTENT_TYPE, "application/json")],
            self.body,
        )
            .into_response()
    }
}

/// An error reply with a machine-readable body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": kind, "message": message.into() }),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed", message)
    }

    /// Adds a field to the error body.
    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.body[key] = serde_json::to_value(value).expect("error fields serialize");
        self
    }
}

impl From<tracelab_core::Error> for ApiError {
    fn from(e: tracelab_core::Error) -> Self {
        let status = if e.is_config_error() {
            StatusCode::BAD_REQUEST
        } else {
            StatusCode::UNPROCESSABLE_ENTITY
        };
        Self::new(status, e.kind(), e.to_string())
    }
}

impl From<ApiError> for Reply {
    fn from(e: ApiError) -> Self {
        Reply::json(e.status, &e.body)
    }
}

#[derive(Debug, Default)]
pub struct Session {
    cache: Mutex<HashMap<String, Reply>>,
    system: Mutex<Option<SystemSpec>>,
}

impl Session {
    fn cached(&self, key: &str) -> Option<Reply> {
        self.cache.lock().expect("cache lock").get(key).cloned()
    }

    /// Stores `reply` unless the key is already present; entries never change once written.
    fn store(&self, key: String, reply: &Reply) -> Reply {
        self.cache
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| reply.clone())
            .clone()
    }

    fn set_system(&self, system: SystemSpec) {
        *self.system.lock().expect("system lock") = Some(system);
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum JobStatus {
    Running,
    Done { result: Value },
    Failed { error: Value },
}

#[derive(Debug)]
struct Job {
    session: String,
    status: JobStatus,
}

pub struct AppState {
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<Session>>>,
    jobs: Mutex<HashMap<u64, Job>>,
    next_job: AtomicU64,
    compute: Arc<Semaphore>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        let permits = config.max_concurrent.max(1);
        Arc::new(Self {
            config,
            sessions: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            next_job: AtomicU64::new(1),
            compute: Arc::new(Semaphore::new(permits)),
        })
    }

    fn session(&self, id: &str) -> Arc<Session> {
        self.sessions
            .lock()
            .expect("session lock")
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    fn new_job(&self, session: &str) -> u64 {
        let id = self.next_job.fetch_add(1, Ordering::Relaxed);
        self.jobs.lock().expect("job lock").insert(
            id,
            Job {
                session: session.to_string(),
                status: JobStatus::Running,
            },
        );
        id
    }

    fn finish_job(&self, id: u64, status: JobStatus) {
        if let Some(job) = self.jobs.lock().expect("job lock").get_mut(&id) {
            job.status = status;
        }
    }

    fn job_status(&self, id: u64, session: &str) -> Option<JobStatus> {
        let jobs = self.jobs.lock().expect("job lock");
        jobs.get(&id)
            .filter(|j| j.session == session)
            .map(|j| j.status.clone())
    }
}

pub fn session_id(headers: &HeaderMap) -> Result<String, ApiError> {
    match headers.get(SESSION_HEADER) {
        None => Ok(DEFAULT_SESSION.to_string()),
        Some(v) => {
            let s = v
                .to_str()
                .map_err(|_| ApiError::bad_request("session id must be visible ASCII"))?;
            if s.is_empty() || s.len() > MAX_SESSION_ID {
                return Err(ApiError::bad_request(format!(
                    "session id must have 1 to {MAX_SESSION_ID} characters"
                )));
            }
            Ok(s.to_string())
        }
    }
}

/// Hash of the endpoint and the body re-serialized with sorted keys.
fn request_key(endpoint: &str, body: &Value) -> String {
    let mut h = Sha256::new();
    h.update(endpoint.as_bytes());
    h.update([0u8]);
    h.update(body.to_string().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_body(bytes: &[u8]) -> Result<Value, ApiError> {
    serde_json::from_slice(bytes)
        .map_err(|e| ApiError::bad_request(format!("body is not valid JSON: {e}")))
}

/// Runs a cacheable POST: session lookup, cache probe, compute, store.
async fn cached_post<F, Fut>(
    state: Arc<AppState>,
    endpoint: &'static str,
    headers: HeaderMap,
    bytes: Bytes,
    compute: F,
) -> Response
where
    F: FnOnce(Arc<AppState>, Arc<Session>, String, Value) -> Fut,
    Fut: std::future::Future<Output = Result<Reply, ApiError>>,
{
    let sid = match session_id(&headers) {
        Ok(s) => s,
        Err(e) => return with_session(Reply::from(e), None),
    };
    let body = match parse_body(&bytes) {
        Ok(b) => b,
        Err(e) => return with_session(Reply::from(e), Some(&sid)),
    };
    let session = state.session(&sid);
    let key = request_key(endpoint, &body);
    if let Some(hit) = session.cached(&key) {
        return with_session(hit, Some(&sid));
    }
    let reply = match compute(state, session.clone(), sid.clone(), body).await {
        Ok(r) => session.store(key, &r),
        Err(e) => e.into(),
    };
    with_session(reply, Some(&sid))
}

fn with_session(reply: Reply, sid: Option<&str>) -> Response {
    let mut resp = reply.into_response();
    if let Some(v) = sid.and_then(|s| HeaderValue::from_str(s).ok()) {
        resp.headers_mut()
            .insert(HeaderName::from_static(SESSION_HEADER), v);
    }
    resp
}

/// Runs `f` on a blocking thread within the budget; 503 when busy or too slow.
async fn within_budget<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    let budget_ms = state.config.budget.as_millis() as u64;
    let permit = state.compute.clone().try_acquire_owned().map_err(|_| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "busy",
            "all compute slots are in use",
        )
        .with("budget_ms", budget_ms)
    })?;
    let task = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        f()
    });
    match tokio::time::timeout(state.config.budget, task).await {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "panic",
            e.to_string(),
        )),
        Err(_) => Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "over_budget",
            format!("computation exceeded the {budget_ms} ms budget"),
        )
        .with("budget_ms", budget_ms)),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let ui_origin = state.config.ui_origin.clone();
    let origin =
        AllowOrigin::predicate(move |o: &HeaderValue, _| o.as_bytes() == ui_origin.as_bytes());
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([
            header::CONTENT_TYPE,
            HeaderName::from_static(SESSION_HEADER),
        ])
        .expose_headers([HeaderName::from_static(SESSION_HEADER)]);
    Router::new()
        .route("/orbit", post(handlers::orbit))
        .route("/chaos", post(handlers::chaos))
        .route("/manifold", post(handlers::manifold))
        .route("/tangency-scan", post(handlers::tangency_scan))
        .route("/jobs/{id}", get(handlers::job))
        .route("/meta", get(handlers::meta))
        .route("/session", get(handlers::session))
        .layer(cors)
        .with_state(state)
}
