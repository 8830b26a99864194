//! JSON-over-HTTP routes.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use faqir_core::RetrievalConfig;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::registry::{FaqInput, Registry, RegistryError, TrainRequest};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterBody {
    pub tenant_id: String,
    pub faqs: Vec<FaqInput>,
    #[serde(default)]
    pub config: Option<RetrievalConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaqsBody {
    pub faqs: Vec<FaqInput>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryBody {
    pub text: String,
    #[serde(default)]
    pub k: Option<usize>,
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let status = match &e {
            RegistryError::UnknownTenant(_) => StatusCode::NOT_FOUND,
            RegistryError::DuplicateTenant(_) | RegistryError::VersionNotNewer { .. } => StatusCode::CONFLICT,
            RegistryError::NoTenants => StatusCode::NOT_FOUND,
            e if e.is_client_error() => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: e.body_text(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Run blocking registry work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, RegistryError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: format!("worker failed: {e}"),
        }),
    }
}

async fn register(
    State(reg): State<Arc<Registry>>,
    body: Result<Json<RegisterBody>, JsonRejection>,
) -> Result<(StatusCode, Json<crate::registry::TenantInfo>), ApiError> {
    let Json(body) = body?;
    let info = blocking(move || reg.register_tenant(&body.tenant_id, body.faqs, body.config)).await?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn put_faqs(
    State(reg): State<Arc<Registry>>,
    Path(id): Path<String>,
    body: Result<Json<FaqsBody>, JsonRejection>,
) -> ApiResult<crate::registry::TenantInfo> {
    let Json(body) = body?;
    Ok(Json(blocking(move || reg.update_faqs(&id, body.faqs)).await?))
}

async fn train(
    State(reg): State<Arc<Registry>>,
    Path(id): Path<String>,
    body: Option<Json<TrainRequest>>,
) -> ApiResult<faqir_core::TrainReport> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    Ok(Json(blocking(move || reg.train_tenant(&id, &req)).await?))
}

async fn query(
    State(reg): State<Arc<Registry>>,
    Path(id): Path<String>,
    body: Result<Json<QueryBody>, JsonRejection>,
) -> ApiResult<crate::registry::QueryResponse> {
    let Json(body) = body?;
    if body.k == Some(0) {
        return Err(RegistryError::BadRequest("k must be at least 1".into()).into());
    }
    Ok(Json(blocking(move || reg.handle_query(&id, &body.text, body.k)).await?))
}

async fn config(State(reg): State<Arc<Registry>>, Path(id): Path<String>) -> ApiResult<crate::registry::TenantInfo> {
    Ok(Json(reg.info(&id)?))
}

async fn memory(State(reg): State<Arc<Registry>>) -> ApiResult<crate::registry::MemoryReport> {
    Ok(Json(reg.memory_report()?))
}

async fn health(State(reg): State<Arc<Registry>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "tenants": reg.len(), "registry_version": reg.version() }))
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/metrics/memory", get(memory))
        .route("/tenants", post(register))
        .route("/tenants/{id}/faqs", put(put_faqs))
        .route("/tenants/{id}/train", post(train))
        .route("/tenants/{id}/query", post(query))
        .route("/tenants/{id}/config", get(config))
        .with_state(registry)
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    registry: Arc<Registry>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(registry)).with_graceful_shutdown(shutdown).await
}
