//! HTTP front end for the binmetric library.
//!
//! Every compute endpoint parses its body into the matching `workflow`
//! request, runs the `workflow::run_*` call on the blocking pool under the
//! compute budget and returns `{"status": "ok", "result": ...}` where
//! `result` is exactly the library's serialization of the report.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use binmetric::workflow::{
    run_binarize, run_compare, run_estimate, run_plan, run_plan_table_cancellable, BinarizeRequest, CompareRequest, EstimateRequest,
    PlanRequest, PlanTableRequest,
};
use binmetric::{Error, GridConfig, PlanParams};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest grid a request may ask for.
pub const GRID_CAP: GridConfig = GridConfig::FULL;

/// Most values per axis of a /v1/plan/table request.
pub const MAX_TABLE_AXIS: usize = 10;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_BUDGET_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub port: u16,
    pub compute_budget: Duration,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { port: DEFAULT_PORT, compute_budget: Duration::from_millis(DEFAULT_BUDGET_MS), cors_origin: None }
    }
}

impl ServiceConfig {
    /// Reads PORT, COMPUTE_BUDGET_MS and CORS_ORIGIN, falling back to the
    /// defaults for unset variables.
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let mut config = ServiceConfig::default();
        if let Some(v) = get("PORT") {
            config.port = v.trim().parse().map_err(|_| format!("PORT must be a port number, got {v:?}"))?;
        }
        if let Some(v) = get("COMPUTE_BUDGET_MS") {
            let ms: u64 = v.trim().parse().map_err(|_| format!("COMPUTE_BUDGET_MS must be milliseconds, got {v:?}"))?;
            if ms == 0 {
                return Err("COMPUTE_BUDGET_MS must be positive".into());
            }
            config.compute_budget = Duration::from_millis(ms);
        }
        config.cors_origin = get("CORS_ORIGIN").filter(|v| !v.trim().is_empty() && v.trim() != "*");
        Ok(config)
    }
}

#[derive(Clone)]
struct AppState {
    budget: Duration,
}

/// The /v1 API with CORS applied.
pub fn router(config: &ServiceConfig) -> Router {
    let cors = match &config.cors_origin {
        Some(origin) => match HeaderValue::from_str(origin) {
            Ok(v) => CorsLayer::new().allow_origin(v),
            Err(_) => {
                log::warn!("ignoring unparsable CORS_ORIGIN {origin:?}");
                CorsLayer::new().allow_origin(Any)
            }
        },
        None => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);

    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/estimate", post(estimate))
        .route("/v1/compare", post(compare))
        .route("/v1/plan", post(plan))
        .route("/v1/plan/table", post(plan_table))
        .route("/v1/binarize", post(binarize))
        .layer(cors)
        .with_state(AppState { budget: config.compute_budget })
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, config: &ServiceConfig) -> std::io::Result<()> {
    axum::serve(listener, router(config)).await
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn invalid(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "invalid_request", message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UndefinedEstimator { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "undefined_estimator"),
            Error::Cancelled => (StatusCode::REQUEST_TIMEOUT, "compute_budget_exceeded"),
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::Numeric(_) => (StatusCode::INTERNAL_SERVER_ERROR, "numeric_failure"),
            Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
            _ => (StatusCode::BAD_REQUEST, "invalid_request"),
        };
        ApiError { status, code, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "status": "error", "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

/// Checks that have to pass before any computation starts.
trait Admissible {
    fn grids(&self) -> Vec<GridConfig> {
        Vec::new()
    }

    fn check(&self) -> Result<(), ApiError> {
        check_grids(&self.grids())
    }
}

fn check_grids(grids: &[GridConfig]) -> Result<(), ApiError> {
    match grids.iter().find(|g| !g.fits_within(&GRID_CAP)) {
        Some(g) => Err(ApiError::invalid(format!(
            "grid {}x{}x{} exceeds the server cap of {}x{}x{}",
            g.n_alpha, g.n_rho, g.n_eta, GRID_CAP.n_alpha, GRID_CAP.n_rho, GRID_CAP.n_eta
        ))),
        None => Ok(()),
    }
}

fn plan_grids(p: &PlanParams) -> Vec<GridConfig> {
    std::iter::once(p.grids).chain(p.grid_cap).collect()
}

impl Admissible for EstimateRequest {
    fn grids(&self) -> Vec<GridConfig> {
        self.grid.into_iter().collect()
    }
}

impl Admissible for CompareRequest {
    fn grids(&self) -> Vec<GridConfig> {
        self.a.grid.into_iter().chain(self.b.grid).collect()
    }
}

impl Admissible for PlanRequest {
    fn grids(&self) -> Vec<GridConfig> {
        plan_grids(&self.params)
    }
}

impl Admissible for PlanTableRequest {
    fn grids(&self) -> Vec<GridConfig> {
        plan_grids(&self.params)
    }

    fn check(&self) -> Result<(), ApiError> {
        for (name, axis) in [("phi_values", &self.phi_values), ("m_values", &self.m_values)] {
            if axis.len() > MAX_TABLE_AXIS {
                return Err(ApiError::invalid(format!(
                    "{name} has {} values; at most {MAX_TABLE_AXIS} per axis are allowed",
                    axis.len()
                )));
            }
        }
        check_grids(&self.grids())
    }
}

impl Admissible for BinarizeRequest {}

/// Parses, checks and runs `f` on the blocking pool within the budget.
/// `f` receives a flag that is raised when the budget runs out.
async fn compute<Req, Resp, F>(state: &AppState, body: &Bytes, f: F) -> Result<Response, ApiError>
where
    Req: DeserializeOwned + Admissible + Send + 'static,
    Resp: Serialize + Send + 'static,
    F: FnOnce(&Req, &AtomicBool) -> binmetric::Result<Resp> + Send + 'static,
{
    let req: Req = serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("invalid JSON body: {e}")))?;
    req.check()?;
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&cancel);
    let task = tokio::task::spawn_blocking(move || f(&req, &flag));
    let out = match tokio::time::timeout(state.budget, task).await {
        Ok(joined) => joined.map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: format!("computation aborted: {e}"),
        })??,
        Err(_) => {
            // Cancellable work stops at its next check; the rest runs out
            // on its blocking thread and is discarded.
            cancel.store(true, Ordering::Relaxed);
            return Err(ApiError {
                status: StatusCode::REQUEST_TIMEOUT,
                code: "compute_budget_exceeded",
                message: format!("computation exceeded the budget of {} ms", state.budget.as_millis()),
            });
        }
    };
    Ok(Json(json!({ "status": "ok", "result": out })).into_response())
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": VERSION }))
}

async fn estimate(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    compute(&state, &body, |r: &EstimateRequest, _: &AtomicBool| run_estimate(r).map(|(report, _)| report)).await
}

async fn compare(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    compute(&state, &body, |r, _: &AtomicBool| run_compare(r)).await
}

async fn plan(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    compute(&state, &body, |r, _: &AtomicBool| run_plan(r)).await
}

async fn plan_table(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    compute(&state, &body, run_plan_table_cancellable).await
}

async fn binarize(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    compute(&state, &body, |r, _: &AtomicBool| run_binarize(r)).await
}
