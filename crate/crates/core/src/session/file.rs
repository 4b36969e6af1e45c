use std::fs;
use std::io::Write;
use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Session;

pub const SESSION_FORMAT: &str = "conceptviz-session";
pub const SESSION_FORMAT_VERSION: u32 = 1;

/// On-disk session document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SessionFile {
    pub format: String,
    pub version: u32,
    pub session: Session,
}

impl SessionFile {
    pub fn new(session: Session) -> Self {
        SessionFile { format: SESSION_FORMAT.into(), version: SESSION_FORMAT_VERSION, session }
    }
}

#[derive(Debug, Error)]
pub enum SessionFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed session file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported session file {format} v{version}")]
    Unsupported { format: String, version: u32 },
}

/// Writes `s` to `path` through a temporary file and a rename, so a crash
/// leaves either the old or the new document.
pub fn save_session(path: &Path, s: &Session) -> Result<(), SessionFileError> {
    let body = serde_json::to_vec_pretty(&SessionFile::new(s.clone()))?;
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&body)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_session(path: &Path) -> Result<Session, SessionFileError> {
    let bytes = fs::read(path)?;
    parse_session(&bytes)
}

pub fn parse_session(bytes: &[u8]) -> Result<Session, SessionFileError> {
    #[derive(Deserialize)]
    struct Header {
        format: String,
        version: u32,
    }
    let h: Header = serde_json::from_slice(bytes)?;
    if h.format != SESSION_FORMAT || h.version != SESSION_FORMAT_VERSION {
        return Err(SessionFileError::Unsupported { format: h.format, version: h.version });
    }
    let f: SessionFile = serde_json::from_slice(bytes)?;
    Ok(f.session)
}
