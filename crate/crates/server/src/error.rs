use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use conceptviz::chart::ChartError;
use conceptviz::codegen::CodegenError;
use conceptviz::concept::ConceptError;
use conceptviz::formula::FormulaError;
use conceptviz::session::{SessionError, SessionFileError};
use conceptviz::synth::SynthError;
use conceptviz::table::TableError;
use serde_json::{json, Value as Json};

use crate::envelope::{ApiErrorBody, Envelope};

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Json>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), details: None }
    }

    pub fn with_details(mut self, details: Json) -> Self {
        self.details = Some(details);
        self
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "MalformedInput", message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidParameter", message)
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "SessionNotFound", format!("no session `{id}`"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Envelope::<()>::Err {
            ok: false,
            error: ApiErrorBody { code: self.code.to_string(), message: self.message, details: self.details },
        };
        (self.status, axum::Json(body)).into_response()
    }
}

impl From<TableError> for ApiError {
    fn from(e: TableError) -> Self {
        ApiError::malformed(e.to_string())
    }
}

impl From<SessionFileError> for ApiError {
    fn from(e: SessionFileError) -> Self {
        ApiError::internal(e.to_string())
    }
}

fn unprocessable(code: &'static str, message: String) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
}

fn conflict(code: &'static str, message: String) -> ApiError {
    ApiError::new(StatusCode::CONFLICT, code, message)
}

impl From<ConceptError> for ApiError {
    fn from(e: ConceptError) -> Self {
        let m = e.to_string();
        match e {
            ConceptError::DuplicateName(_) => conflict("DuplicateName", m),
            ConceptError::InUse(..) => conflict("ConceptInUse", m),
            ConceptError::EmptyExamples => unprocessable("EmptyExamples", m),
            ConceptError::EmptyName => unprocessable("EmptyName", m),
            ConceptError::UnknownConcept(_) => unprocessable("UnknownConcept", m),
            ConceptError::TypeMismatch(_) => unprocessable("TypeMismatch", m),
            ConceptError::BindingIncomplete(_) => unprocessable("BindingIncomplete", m),
        }
    }
}

impl From<ChartError> for ApiError {
    fn from(e: ChartError) -> Self {
        let m = e.to_string();
        match e {
            ChartError::UnknownTemplate(_) => unprocessable("UnknownTemplate", m),
            ChartError::MissingRequiredChannel(_) => unprocessable("MissingRequiredChannel", m),
            ChartError::UnknownChannel(_) => unprocessable("UnknownChannel", m),
            ChartError::UnknownConceptInEncoding(_) => unprocessable("UnknownConcept", m),
            ChartError::FieldNotInTable(_) => unprocessable("FieldNotInTable", m),
            ChartError::AggregateOnNonQuantitative { .. } => unprocessable("AggregateOnNonQuantitative", m),
            ChartError::InvalidEncoding(_) => unprocessable("InvalidEncoding", m),
            ChartError::InvalidTemplate(_) => unprocessable("InvalidTemplate", m),
            ChartError::SchemaViolation(errors) => {
                ApiError::internal(m).with_details(json!({ "errors": errors }))
            }
        }
    }
}

impl From<FormulaError> for ApiError {
    fn from(e: FormulaError) -> Self {
        let m = e.to_string();
        let details = serde_json::to_value(&e).ok();
        let code = match e {
            FormulaError::Parse { .. } => "ParseError",
            FormulaError::UnknownIdentifier { .. } => "UnknownIdentifier",
            FormulaError::Type { .. } => "TypeError",
            FormulaError::Arity { .. } => "ArityError",
        };
        ApiError { details, ..unprocessable(code, m) }
    }
}

impl From<CodegenError> for ApiError {
    fn from(e: CodegenError) -> Self {
        let m = e.to_string();
        match e {
            CodegenError::InvalidRequest(_) => unprocessable("InvalidRequest", m),
            CodegenError::BackendUnavailable { retryable, .. } => {
                ApiError::new(StatusCode::BAD_GATEWAY, "BackendUnavailable", m)
                    .with_details(json!({ "retryable": retryable }))
            }
            CodegenError::AllCandidatesRejected { rejected, exchanges } => {
                unprocessable("AllCandidatesRejected", m)
                    .with_details(json!({ "rejected": rejected, "exchanges": exchanges }))
            }
        }
    }
}

impl From<SynthError> for ApiError {
    fn from(e: SynthError) -> Self {
        let m = e.to_string();
        match e {
            SynthError::InvalidExample(_) => unprocessable("InvalidExample", m),
            SynthError::EmptyTable => unprocessable("EmptyTable", m),
            SynthError::NoProgram(d) => unprocessable("NoProgram", m).with_details(json!(d)),
            SynthError::Timeout { explored } => ApiError::new(StatusCode::GATEWAY_TIMEOUT, "SynthesisTimeout", m)
                .with_details(json!({ "explored": explored })),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let m = e.to_string();
        match e {
            SessionError::Concept(e) => e.into(),
            SessionError::Chart(e) => e.into(),
            SessionError::Formula(e) => e.into(),
            SessionError::Derive(_) => unprocessable("DerivationFailed", m),
            SessionError::Codegen(e) => e.into(),
            SessionError::Synth(e) => e.into(),
            SessionError::UnknownConcept(_) => unprocessable("UnknownConcept", m),
            SessionError::NotInWorkingTable(_) => unprocessable("NotInWorkingTable", m),
            SessionError::NoPendingFormulate => conflict("NoPendingFormulate", m),
            SessionError::ExampleMismatch { expected, found } => unprocessable("ExampleMismatch", m)
                .with_details(json!({ "expected": expected, "found": found })),
            SessionError::NoUnknownExamples => unprocessable("NoUnknownExamples", m),
            SessionError::StaleCandidate(_) => conflict("StaleCandidate", m),
            SessionError::UnknownCandidate(_) => ApiError::new(StatusCode::NOT_FOUND, "UnknownCandidate", m),
            SessionError::NoCandidates(errors) => {
                unprocessable("NoCandidates", m).with_details(json!({ "errors": errors }))
            }
            SessionError::UsedByChart(..) => conflict("ConceptInUse", m),
            SessionError::Replay(_) => ApiError::internal(m),
        }
    }
}
