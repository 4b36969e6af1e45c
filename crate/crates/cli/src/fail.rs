use conceptviz::codegen::CodegenError;
use conceptviz::session::{SessionError, SessionFileError};
use conceptviz::synth::SynthError;

pub const ERROR: u8 = 1;
pub const NO_RESULT: u8 = 2;
pub const NEEDS_EXAMPLE: u8 = 3;
pub const USAGE: u8 = 64;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn error(message: impl Into<String>) -> Self {
        Failure { code: ERROR, message: message.into() }
    }

    pub fn no_result(message: impl Into<String>) -> Self {
        Failure { code: NO_RESULT, message: message.into() }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::NoProgram(_) | SynthError::Timeout { .. } => Failure::no_result(e.to_string()),
            _ => Failure::error(e.to_string()),
        }
    }
}

impl From<CodegenError> for Failure {
    fn from(e: CodegenError) -> Self {
        match e {
            CodegenError::AllCandidatesRejected { .. } => Failure::no_result(e.to_string()),
            _ => Failure::error(e.to_string()),
        }
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Synth(e) => e.into(),
            SessionError::Codegen(e) => e.into(),
            SessionError::NoCandidates(_) => Failure::no_result(e.to_string()),
            _ => Failure::error(e.to_string()),
        }
    }
}

impl From<SessionFileError> for Failure {
    fn from(e: SessionFileError) -> Self {
        Failure::error(e.to_string())
    }
}
