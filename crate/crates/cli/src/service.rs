//! HTTP API over the planner and auditor. The DEM is loaded once at start-up
//! and shared read-only between requests.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use sarplan::DemRaster;

use crate::{audit_body, plan_request, AuditBody, CliError, PlanBody, PlanInputs};

#[derive(Debug)]
pub struct AppState {
    pub dem: DemRaster,
    /// Name clients may use to refer to the preloaded DEM.
    pub dem_id: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub error: String,
    pub field: Option<String>,
}

impl From<CliError> for ApiError {
    fn from(e: CliError) -> Self {
        let status = match e {
            CliError::Input { .. } => StatusCode::BAD_REQUEST,
            CliError::Infeasible(_) => StatusCode::UNPROCESSABLE_ENTITY,
            CliError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            field: e.field().map(str::to_string),
            error: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            error: e.body_text(),
            field: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.error, "field": self.field }))).into_response()
    }
}

/// Documents are already rendered; send them verbatim so they match the CLI byte for byte.
fn document(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn plan(
    State(state): State<Arc<AppState>>,
    body: Result<Json<PlanBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body?;
    if let Some(id) = &body.dem {
        if *id != state.dem_id {
            return Err(CliError::input(
                format!("unknown dem {id:?}; this server holds {:?}", state.dem_id),
                Some("dem"),
            )
            .into());
        }
    }
    let inputs = PlanInputs::from_body(body)?;
    let doc = tokio::task::spawn_blocking(move || plan_request(&inputs, &state.dem))
        .await
        .map_err(|e| CliError::Internal(e.to_string()))??;
    Ok(document(doc))
}

async fn audit(body: Result<Json<AuditBody>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(body) = body?;
    let report = tokio::task::spawn_blocking(move || audit_body(body))
        .await
        .map_err(|e| CliError::Internal(e.to_string()))??;
    Ok(document(report.to_json_string()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/plan", post(plan))
        .route("/api/audit", post(audit))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, bind: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((bind, port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
