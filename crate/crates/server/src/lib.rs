//! HTTP/JSON service over conceptviz sessions.
//!
//! Every response is an envelope, `{"ok": true, "payload": ...}` or
//! `{"ok": false, "error": {"code", "message", "details"}}`. Sessions are kept
//! one JSON document per session under the data directory and reloaded on start.

pub mod api;
pub mod config;
pub mod envelope;
pub mod error;
pub mod idempotency;
pub mod store;

use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::http::{HeaderName, HeaderValue, Method};
use axum::routing::{delete, get, post};
use axum::Router;
use conceptviz::chart::ChartTemplate;
use conceptviz::codegen::{backend_from_config, GenerationBackend, Generation};
use conceptviz::concept::DataConcept;
use conceptviz::session::{FormulateOutcome, SavedChart, Session};
use serde_json::{json, Map, Value as Json};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub use config::ServerConfig;
pub use envelope::{envelope_schema, request_schema, ApiErrorBody};
pub use error::ApiError;
pub use store::Store;

use api::*;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub config: Arc<ServerConfig>,
    pub backend: Arc<dyn GenerationBackend>,
    pub idempotency: Arc<idempotency::Idempotency>,
}

impl AppState {
    /// Opens the data directory and builds the configured backend.
    pub fn open(config: ServerConfig) -> std::io::Result<AppState> {
        let backend: Arc<dyn GenerationBackend> = Arc::from(backend_from_config(&config.backend));
        Self::with_backend(config, backend)
    }

    pub fn with_backend(config: ServerConfig, backend: Arc<dyn GenerationBackend>) -> std::io::Result<AppState> {
        Ok(AppState {
            store: Arc::new(Store::open(&config.data_dir)?),
            config: Arc::new(config),
            backend,
            idempotency: Arc::default(),
        })
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.max_upload_bytes;
    let cors = cors_layer(&state.config.cors_origins);
    let app = Router::new()
        .route("/health", get(health))
        .route("/schemas", get(schemas))
        .route("/templates", get(templates))
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/table", get(get_table))
        .route("/sessions/{id}/concepts/custom", post(create_custom))
        .route("/sessions/{id}/concepts/derive", post(derive_commit))
        .route("/sessions/{id}/concepts/{concept}", delete(delete_concept))
        .route("/sessions/{id}/derive/preview", post(derive_preview))
        .route("/sessions/{id}/templates", get(session_templates).post(register_template))
        .route("/sessions/{id}/formulate", post(formulate))
        .route("/sessions/{id}/formulate/complete", post(complete_formulate))
        .route("/sessions/{id}/charts/save", post(save_chart))
        .fallback(not_found)
        .layer(axum::middleware::from_fn_with_state(state.clone(), idempotency::middleware))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state);
    match cors {
        Some(c) => app.layer(c),
        None => app,
    }
}

fn cors_layer(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    Some(
        CorsLayer::new()
            .allow_origin(AllowOrigin::list(list))
            .allow_methods([Method::GET, Method::POST, Method::DELETE])
            .allow_headers([
                axum::http::header::CONTENT_TYPE,
                HeaderName::from_static(idempotency::HEADER),
            ])
            .expose_headers([HeaderName::from_static(idempotency::REPLAYED_HEADER)]),
    )
}

fn entry(request: Option<Json>, response: Json) -> Json {
    let mut m = Map::new();
    if let Some(r) = request {
        m.insert("request".into(), r);
    }
    m.insert("response".into(), response);
    Json::Object(m)
}

/// Request and response schemas of every endpoint, keyed by `"METHOD /path"`.
pub fn schema_catalog() -> Json {
    json!({
        "GET /health": entry(None, envelope_schema::<Health>()),
        "GET /schemas": entry(None, envelope_schema::<Json>()),
        "GET /templates": entry(None, envelope_schema::<TemplateList>()),
        "POST /sessions": entry(None, envelope_schema::<SessionCreated>()),
        "GET /sessions": entry(None, envelope_schema::<Vec<SessionSummary>>()),
        "GET /sessions/{id}": entry(None, envelope_schema::<Session>()),
        "GET /sessions/{id}/table": entry(None, envelope_schema::<TablePage>()),
        "POST /sessions/{id}/concepts/custom":
            entry(Some(request_schema::<CustomConceptRequest>()), envelope_schema::<DataConcept>()),
        "POST /sessions/{id}/derive/preview":
            entry(Some(request_schema::<DerivePreviewRequest>()), envelope_schema::<Generation>()),
        "POST /sessions/{id}/concepts/derive":
            entry(Some(request_schema::<DeriveCommitRequest>()), envelope_schema::<DataConcept>()),
        "DELETE /sessions/{id}/concepts/{concept}": entry(None, envelope_schema::<DataConcept>()),
        "GET /sessions/{id}/templates": entry(None, envelope_schema::<TemplateList>()),
        "POST /sessions/{id}/templates":
            entry(Some(request_schema::<TemplateRequest>()), envelope_schema::<ChartTemplate>()),
        "POST /sessions/{id}/formulate":
            entry(Some(request_schema::<FormulateRequest>()), envelope_schema::<FormulateOutcome>()),
        "POST /sessions/{id}/formulate/complete":
            entry(Some(request_schema::<CompleteRequest>()), envelope_schema::<CandidateList>()),
        "POST /sessions/{id}/charts/save":
            entry(Some(request_schema::<SaveChartRequest>()), envelope_schema::<SavedChart>()),
    })
}

/// Binds `config.bind` and serves until ctrl-c.
pub async fn serve(config: ServerConfig) -> std::io::Result<()> {
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(state.config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %state.store.dir().display(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
