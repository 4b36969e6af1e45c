use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use conceptviz::chart::{list_templates, ChartTemplate, Encoding};
use conceptviz::codegen::{generate_candidates, CodegenError, Generation, Origin};
use conceptviz::concept::DataConcept;
use conceptviz::session::{ChartCandidate, FormulateOutcome, SavedChart, Session};
use conceptviz::synth::ExampleRelation;
use conceptviz::table::{Table, TableFormat};
use conceptviz::value::Value;
use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::envelope::Reply;
use crate::error::ApiError;
use crate::AppState;

type ApiResult<T> = Result<Reply<T>, ApiError>;

/// A JSON body whose failures come back as enveloped errors.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state).await.map_err(body_rejection)?;
        serde_json::from_slice(&bytes).map(ApiJson).map_err(|e| ApiError::malformed(format!("invalid request body: {e}")))
    }
}

fn body_rejection(e: axum::extract::rejection::BytesRejection) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "TooLarge", "request body exceeds the upload limit")
    } else {
        ApiError::malformed(e.body_text())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SessionCreated {
    pub session: String,
    pub table: String,
    pub concepts: Vec<DataConcept>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SessionSummary {
    pub id: String,
    pub version: u64,
    pub current_table: String,
    pub concepts: usize,
    pub charts: usize,
}

#[derive(Clone, Debug, Default, Deserialize, JsonSchema)]
pub struct UploadParams {
    /// Table name; defaults to `table`.
    pub name: Option<String>,
    /// Overrides the format implied by the content type.
    pub format: Option<TableFormat>,
}

#[derive(Clone, Debug, Default, Deserialize, JsonSchema)]
pub struct PageParams {
    pub offset: Option<usize>,
    pub limit: Option<usize>,
    /// Snapshot id; the current working table when absent.
    pub table: Option<String>,
}

pub const DEFAULT_PAGE: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TablePage {
    pub table_id: String,
    pub offset: usize,
    pub limit: usize,
    pub total_rows: usize,
    pub table: Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CustomConceptRequest {
    pub name: String,
    pub examples: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DerivePreviewRequest {
    /// Concept ids, in parameter order.
    pub sources: Vec<String>,
    pub description: String,
    /// Name of the concept to create.
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DeriveCommitRequest {
    pub name: String,
    pub sources: Vec<String>,
    pub description: String,
    /// Formula text, as previewed or edited.
    pub formula: String,
    /// Defaults to `user-edited`.
    #[serde(default)]
    pub origin: Option<Origin>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FormulateRequest {
    pub template: String,
    pub encodings: Vec<Encoding>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CompleteRequest {
    pub example: ExampleRelation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CandidateList {
    pub candidates: Vec<ChartCandidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SaveChartRequest {
    pub candidate: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TemplateRequest {
    /// A Vega-Lite document with `"$channel"` placeholders.
    pub doc: Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TemplateList {
    pub templates: Vec<ChartTemplate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
}

pub async fn health(State(app): State<AppState>) -> ApiResult<Health> {
    Ok(Reply::ok(Health { status: "ok".into(), sessions: app.store.ids().len() }))
}

pub async fn schemas() -> ApiResult<Json> {
    Ok(Reply::ok(crate::schema_catalog()))
}

pub async fn templates() -> ApiResult<TemplateList> {
    Ok(Reply::ok(TemplateList { templates: list_templates() }))
}

fn upload_format(headers: &HeaderMap, params: &UploadParams) -> Result<TableFormat, ApiError> {
    if let Some(f) = params.format {
        return Ok(f);
    }
    let ct = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("");
    let mime = ct.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    match mime.as_str() {
        "text/csv" | "application/csv" | "text/plain" | "" => Ok(TableFormat::Csv),
        "application/json" => Ok(TableFormat::JsonRows),
        other => Err(ApiError::new(
            StatusCode::UNSUPPORTED_MEDIA_TYPE,
            "UnsupportedMediaType",
            format!("cannot read a table from `{other}`; send text/csv or application/json"),
        )),
    }
}

pub async fn create_session(
    State(app): State<AppState>,
    Query(params): Query<UploadParams>,
    headers: HeaderMap,
    body: Result<Bytes, axum::extract::rejection::BytesRejection>,
) -> ApiResult<SessionCreated> {
    let body = body.map_err(body_rejection)?;
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::malformed("empty table upload"));
    }
    let format = upload_format(&headers, &params)?;
    let name = params.name.unwrap_or_else(|| "table".into());
    let table = Table::parse(&body, format, &name)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::new(&id, table);
    let created = SessionCreated {
        session: id,
        table: session.current_table.clone(),
        concepts: session.shelf.concepts().to_vec(),
    };
    app.store.insert(session).await?;
    Ok(Reply(StatusCode::CREATED, created))
}

pub async fn list_sessions(State(app): State<AppState>) -> ApiResult<Vec<SessionSummary>> {
    let mut out = Vec::new();
    for id in app.store.ids() {
        if let Ok(s) = app.store.read(&id, summary).await {
            out.push(s);
        }
    }
    Ok(Reply::ok(out))
}

fn summary(s: &Session) -> SessionSummary {
    SessionSummary {
        id: s.id.clone(),
        version: s.version,
        current_table: s.current_table.clone(),
        concepts: s.shelf.concepts().len(),
        charts: s.charts.len(),
    }
}

pub async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Session> {
    Ok(Reply::ok(app.store.read(&id, Session::clone).await?))
}

pub async fn get_table(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(p): Query<PageParams>,
) -> ApiResult<TablePage> {
    let offset = p.offset.unwrap_or(0);
    let limit = p.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 {
        return Err(ApiError::invalid("limit must be at least 1"));
    }
    let page = app
        .store
        .read(&id, |s| {
            let table_id = p.table.clone().unwrap_or_else(|| s.current_table.clone());
            let t = s.tables.get(&table_id).ok_or_else(|| {
                ApiError::new(StatusCode::NOT_FOUND, "UnknownTable", format!("no table `{table_id}` in this session"))
            })?;
            Ok::<_, ApiError>(TablePage { total_rows: t.num_rows(), table: t.page(offset, limit), table_id, offset, limit })
        })
        .await??;
    Ok(Reply::ok(page))
}

pub async fn create_custom(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<CustomConceptRequest>,
) -> ApiResult<DataConcept> {
    let c = app.store.mutate(&id, move |s| Ok(s.create_custom(&req.name, req.examples)?)).await?;
    Ok(Reply(StatusCode::CREATED, c))
}

pub async fn derive_preview(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<DerivePreviewRequest>,
) -> ApiResult<Generation> {
    let request = {
        let req = req.clone();
        app.store.read(&id, move |s| s.derivation_request(&req.sources, &req.description, &req.name)).await??
    };
    let backend = app.backend.clone();
    let job_request = request.clone();
    let job = tokio::task::spawn_blocking(move || generate_candidates(&job_request, backend.as_ref()));
    let limit = Duration::from_secs(app.config.codegen_timeout_secs);
    let outcome = match tokio::time::timeout(limit, job).await {
        Ok(joined) => joined.map_err(|e| ApiError::internal(e.to_string()))?,
        Err(_) => Err(CodegenError::BackendUnavailable {
            message: format!("code generation took longer than {}s", limit.as_secs()),
            retryable: true,
        }),
    };
    let generation = app
        .store
        .mutate(&id, move |s| {
            // The shelf may have moved on while the backend was busy.
            let current = s.derivation_request(&req.sources, &req.description, &req.name)?;
            if current != request {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "SessionChanged",
                    "the source concepts changed while candidates were generated; retry the preview",
                ));
            }
            s.record_preview(&request, &outcome);
            Ok(outcome?)
        })
        .await?;
    Ok(Reply::ok(generation))
}

pub async fn derive_commit(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<DeriveCommitRequest>,
) -> ApiResult<DataConcept> {
    let c = app
        .store
        .mutate(&id, move |s| {
            let origin = req.origin.unwrap_or(Origin::UserEdited);
            Ok(s.commit_derivation(&req.name, &req.sources, &req.description, &req.formula, origin)?)
        })
        .await?;
    Ok(Reply(StatusCode::CREATED, c))
}

pub async fn delete_concept(
    State(app): State<AppState>,
    Path((id, concept)): Path<(String, String)>,
) -> ApiResult<DataConcept> {
    Ok(Reply::ok(app.store.mutate(&id, move |s| Ok(s.delete_concept(&concept)?)).await?))
}

pub async fn session_templates(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<TemplateList> {
    let custom = app.store.read(&id, |s| s.templates.clone()).await?;
    let mut templates = list_templates();
    templates.extend(custom);
    Ok(Reply::ok(TemplateList { templates }))
}

pub async fn register_template(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<TemplateRequest>,
) -> ApiResult<ChartTemplate> {
    let doc = serde_json::to_string(&req.doc).map_err(|e| ApiError::malformed(e.to_string()))?;
    let t = app.store.mutate(&id, move |s| Ok(s.register_template(&doc)?)).await?;
    Ok(Reply(StatusCode::CREATED, t))
}

pub async fn formulate(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<FormulateRequest>,
) -> ApiResult<FormulateOutcome> {
    Ok(Reply::ok(app.store.mutate(&id, move |s| Ok(s.formulate(&req.template, &req.encodings)?)).await?))
}

pub async fn complete_formulate(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<CompleteRequest>,
) -> ApiResult<CandidateList> {
    let candidates = app.store.mutate(&id, move |s| Ok(s.complete_formulate(&req.example)?)).await?;
    Ok(Reply::ok(CandidateList { candidates }))
}

pub async fn save_chart(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SaveChartRequest>,
) -> ApiResult<SavedChart> {
    let chart = app.store.mutate(&id, move |s| Ok(s.save_chart(&req.candidate)?)).await?;
    Ok(Reply(StatusCode::CREATED, chart))
}

pub async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}
