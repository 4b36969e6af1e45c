use std::net::SocketAddr;
use std::path::PathBuf;

use conceptviz::codegen::BackendConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    /// Loopback by default; there is no authentication.
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    pub max_upload_bytes: usize,
    /// Origins allowed to call the API from a browser. Empty disables CORS.
    pub cors_origins: Vec<String>,
    /// Upper bound on one derive preview, including all backend calls.
    pub codegen_timeout_secs: u64,
    pub backend: BackendConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("conceptviz-data"),
            max_upload_bytes: 10 * 1024 * 1024,
            cors_origins: Vec::new(),
            codegen_timeout_secs: 60,
            backend: BackendConfig::default(),
        }
    }
}
