//! OpenAI-compatible completions client.

use std::time::Duration;

use serde_json::json;

use super::{BackendConfig, BackendError, GenerationBackend, Origin};

pub const TEMPERATURE: f64 = 0.3;
const MAX_TOKENS: u32 = 256;

pub struct RemoteBackend {
    cfg: BackendConfig,
}

impl RemoteBackend {
    pub fn new(cfg: BackendConfig) -> Self {
        RemoteBackend { cfg }
    }

    pub fn request_body(&self, prompt: &str, n: usize) -> serde_json::Value {
        json!({
            "model": self.cfg.model,
            "prompt": prompt,
            "max_tokens": MAX_TOKENS,
            "temperature": TEMPERATURE,
            "n": n,
            "stop": ["\n\n"],
        })
    }
}

fn unavailable(message: impl Into<String>, retryable: bool) -> BackendError {
    BackendError { message: message.into(), retryable }
}

impl GenerationBackend for RemoteBackend {
    fn complete(&self, prompt: &str, n: usize) -> Result<Vec<String>, BackendError> {
        let key = std::env::var(&self.cfg.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| unavailable(format!("environment variable {} is not set", self.cfg.api_key_env), false))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.cfg.timeout_secs.max(1)))
            .build()
            .map_err(|e| unavailable(e.to_string(), false))?;
        let resp = client
            .post(&self.cfg.endpoint)
            .bearer_auth(key)
            .json(&self.request_body(prompt, n))
            .send()
            .map_err(|e| unavailable(e.to_string(), e.is_timeout() || e.is_connect()))?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            return Err(unavailable(format!("completion endpoint returned {status}"), retryable));
        }
        let body: serde_json::Value = resp.json().map_err(|e| unavailable(e.to_string(), true))?;
        let choices = body["choices"]
            .as_array()
            .ok_or_else(|| unavailable("completion response has no choices", false))?;
        Ok(choices.iter().filter_map(|c| c["text"].as_str().map(str::to_string)).collect())
    }

    fn origin(&self) -> Origin {
        Origin::Remote
    }
}
