use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Body of the chat endpoint call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// The user prompt (last message).
    pub fn prompt(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unreadable response: {0}")]
    BadResponse(String),
}

impl BackendError {
    /// 5xx, 429, timeouts and transport failures are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Status { status, .. } => *status >= 500 || *status == 429,
            BackendError::Timeout | BackendError::Transport(_) => true,
            BackendError::BadResponse(_) => false,
        }
    }
}

/// Text-in, text-out model endpoint.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub url: String,
    #[serde(default)]
    pub api_key: Option<String>,
    /// Header carrying the key, e.g. `Authorization` or `api-key`.
    #[serde(default = "default_auth_header")]
    pub auth_header: String,
    /// Prepended to the key, e.g. `Bearer `.
    #[serde(default = "default_auth_prefix")]
    pub auth_prefix: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_auth_header() -> String {
    "Authorization".into()
}

fn default_auth_prefix() -> String {
    "Bearer ".into()
}

fn default_timeout() -> u64 {
    60
}

impl HttpBackendConfig {
    /// Reads `MODEL_API_URL` and optional `MODEL_API_KEY`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("MODEL_API_URL").ok().filter(|u| !u.is_empty())?;
        Some(HttpBackendConfig {
            url,
            api_key: std::env::var("MODEL_API_KEY").ok().filter(|k| !k.is_empty()),
            auth_header: default_auth_header(),
            auth_prefix: default_auth_prefix(),
            timeout_secs: default_timeout(),
        })
    }
}

/// Chat-completions style JSON endpoint.
pub struct HttpBackend {
    config: HttpBackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_secs)).build();
        HttpBackend { config, agent }
    }
}

/// Pulls the completion text out of the common response shapes.
pub fn extract_text(v: &Value) -> Option<String> {
    let candidates = [
        v.pointer("/choices/0/message/content"),
        v.pointer("/choices/0/text"),
        v.pointer("/content/0/text"),
        v.pointer("/output/0/content/0/text"),
        v.get("content"),
        v.get("response"),
        v.get("text"),
    ];
    candidates.into_iter().flatten().find_map(|c| c.as_str().map(str::to_string))
}

impl Backend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut call = self.agent.post(&self.config.url).set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.set(&self.config.auth_header, &format!("{}{}", self.config.auth_prefix, key));
        }
        let resp = match call.send_json(request) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(BackendError::Status { status, body });
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("Timeout") {
                    return Err(BackendError::Timeout);
                }
                return Err(BackendError::Transport(msg));
            }
        };
        let body: Value = resp.into_json().map_err(|e| BackendError::BadResponse(e.to_string()))?;
        extract_text(&body).ok_or_else(|| BackendError::BadResponse(format!("no completion text in {body}")))
    }
}
