//! Backend speaking the common chat-completions wire format over HTTP.

use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, GatewayError};

pub const API_KEY_ENV: &str = "SYNTHMIX_API_KEY";
pub const BASE_URL_ENV: &str = "SYNTHMIX_BASE_URL";
pub const DEFAULT_CHAT_PATH: &str = "/v1/chat/completions";
const DEFAULT_BASE_URL: &str = "https://api.openai.com";

#[derive(Debug, Clone)]
pub struct HttpBackend {
    base_url: String,
    path: String,
    api_key: String,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            path: DEFAULT_CHAT_PATH.into(),
            api_key: api_key.into(),
        }
    }

    pub fn with_path(mut self, path: impl Into<String>) -> Self {
        self.path = path.into();
        self
    }

    /// Reads the base URL and key from `SYNTHMIX_BASE_URL` / `SYNTHMIX_API_KEY`,
    /// falling back to `OPENAI_API_KEY` for the key.
    pub fn from_env() -> Result<Self, GatewayError> {
        let key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .map_err(|_| GatewayError::Config(format!("set {API_KEY_ENV} to use the http backend")))?;
        let base = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| DEFAULT_BASE_URL.into());
        Ok(Self::new(base, key))
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.base_url, self.path)
    }

    fn body(request: &ChatRequest<'_>) -> Value {
        let mut body = json!({
            "model": request.config.model_name,
            "messages": request.key.messages,
            "temperature": request.config.temperature,
        });
        if let Some(max) = request.config.max_output_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }
}

fn classify_status(status: u16, body: &str) -> BackendError {
    let snippet: String = body.chars().take(300).collect();
    match status {
        401 | 403 => BackendError::Auth(format!("HTTP {status}: {snippet}")),
        408 | 409 | 429 | 500..=599 => BackendError::Transient {
            status: Some(status),
            message: snippet,
        },
        _ => BackendError::Rejected(format!("HTTP {status}: {snippet}")),
    }
}

/// Pulls `choices[0].message.content` out of a response body.
pub(crate) fn extract_content(body: &str) -> Result<String, BackendError> {
    let value: Value = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(request.config.request_timeout.max(Duration::from_millis(1))))
            .build()
            .into();
        let response = agent
            .post(&self.url())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(Self::body(request));
        let mut response = match response {
            Ok(r) => r,
            Err(e @ (ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound)) => {
                return Err(BackendError::Transient {
                    status: None,
                    message: e.to_string(),
                })
            }
            Err(e) => return Err(BackendError::Rejected(e.to_string())),
        };
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| BackendError::Transient {
            status: Some(status),
            message: format!("reading body: {e}"),
        })?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, &body));
        }
        extract_content(&body)
    }
}
