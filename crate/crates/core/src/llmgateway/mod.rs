//! A uniform chat-completion interface over an HTTP backend and an offline
//! mock, with a content-addressed response cache, retries with exponential
//! backoff, and a bound on concurrent in-flight requests.

mod cache;
mod http;
mod mock;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptgen::ChatPrompt;
use crate::util::sha256_hex;

pub use cache::{CacheEntry, ResponseCache};
pub use http::{HttpBackend, API_KEY_ENV, BASE_URL_ENV, DEFAULT_CHAT_PATH};
pub use mock::{mock_complete, mock_respond, FnBackend, MockBackend, MockFormat, MockMode, MockProfile, MockVocabulary, FILLER_WORDS};

#[derive(Debug, Clone, Error)]
pub enum BackendError {
    /// Rate limiting, server errors, timeouts and dropped connections.
    #[error("transient backend failure{}: {message}", .status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transient { status: Option<u16>, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend request rejected: {0}")]
    Rejected(String),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: BackendError },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend request rejected: {0}")]
    Rejected(String),
    #[error("invalid gateway configuration: {0}")]
    Config(String),
    #[error("response cache error: {0}")]
    Cache(#[from] std::io::Error),
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
    pub max_retries: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            model_name: "gpt-3.5-turbo".into(),
            temperature: 0.7,
            max_output_tokens: None,
            request_timeout: Duration::from_secs(60),
            max_retries: 5,
        }
    }
}

impl GenerationConfig {
    pub fn for_model(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.model_name.trim().is_empty() {
            return Err(GatewayError::Config("model name is blank".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn from_prompt(prompt: &ChatPrompt) -> Vec<Message> {
        vec![
            Message {
                role: "system".into(),
                content: prompt.system_message.clone(),
            },
            Message {
                role: "user".into(),
                content: prompt.user_message.clone(),
            },
        ]
    }
}

/// Everything that identifies one planned call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestKey {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub nonce: String,
}

impl RequestKey {
    pub fn new(prompt: &ChatPrompt, config: &GenerationConfig, nonce: &str) -> Self {
        Self {
            model: config.model_name.clone(),
            messages: Message::from_prompt(prompt),
            temperature: config.temperature,
            nonce: nonce.to_string(),
        }
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("request key serializes").as_bytes())
    }
}

/// What a backend receives for one attempt.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub prompt: &'a ChatPrompt,
    pub config: &'a GenerationConfig,
    pub key: &'a RequestKey,
    pub fingerprint: &'a str,
}

pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, BackendError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, BackendError> {
        (**self).send(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub raw_text: String,
    pub model_name: String,
    pub request_fingerprint: String,
    pub cached: bool,
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub max_in_flight: usize,
    /// First retry waits about this long; each later retry doubles it.
    pub backoff_base: Duration,
    pub cache_dir: Option<PathBuf>,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            backoff_base: Duration::from_secs(1),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    /// Calls that missed the cache and reached the backend.
    pub requests: u64,
    /// Individual backend attempts, retries included.
    pub attempts: u64,
    pub cache_hits: u64,
}

struct InFlight {
    limit: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut current = self.current.lock().expect("limiter lock");
        while *current >= self.limit {
            current = self.freed.wait(current).expect("limiter lock");
        }
        *current += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.current.lock().expect("limiter lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Shared entry point for every model call. Safe to use from many threads.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    options: GatewayOptions,
    cache: Option<ResponseCache>,
    in_flight: InFlight,
    requests: AtomicU64,
    attempts: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn new(backend: impl ChatBackend + 'static, options: GatewayOptions) -> Result<Self, GatewayError> {
        let cache = options.cache_dir.as_ref().map(ResponseCache::open).transpose()?;
        Ok(Self {
            backend: Box::new(backend),
            in_flight: InFlight::new(options.max_in_flight),
            options,
            cache,
            requests: AtomicU64::new(0),
            attempts: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        })
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            requests: self.requests.load(Ordering::SeqCst),
            attempts: self.attempts.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let jitter: f64 = rand::thread_rng().gen_range(0.5..=1.0);
        self.options.backoff_base.mul_f64(2f64.powi(retry as i32) * jitter)
    }

    /// Sends one chat prompt. `nonce` distinguishes planned calls that share a
    /// prompt; identical (model, messages, temperature, nonce) are served from
    /// the cache.
    pub fn complete(
        &self,
        prompt: &ChatPrompt,
        config: &GenerationConfig,
        nonce: &str,
    ) -> Result<CompletionResult, GatewayError> {
        config.validate()?;
        let key = RequestKey::new(prompt, config, nonce);
        let fingerprint = key.fingerprint();
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&fingerprint)? {
                self.cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(CompletionResult {
                    raw_text: entry.response,
                    model_name: config.model_name.clone(),
                    request_fingerprint: fingerprint,
                    cached: true,
                });
            }
        }
        self.requests.fetch_add(1, Ordering::SeqCst);
        let request = ChatRequest {
            prompt,
            config,
            key: &key,
            fingerprint: &fingerprint,
        };
        let mut retry = 0u32;
        let raw_text = loop {
            let outcome = {
                let _permit = self.in_flight.acquire();
                self.attempts.fetch_add(1, Ordering::SeqCst);
                self.backend.send(&request)
            };
            match outcome {
                Ok(text) => break text,
                Err(err @ BackendError::Transient { .. }) => {
                    if retry >= config.max_retries {
                        return Err(GatewayError::RetriesExhausted {
                            attempts: retry + 1,
                            last: err,
                        });
                    }
                    tracing::debug!(retry, error = %err, "retrying backend call");
                    std::thread::sleep(self.backoff(retry));
                    retry += 1;
                }
                Err(BackendError::Auth(m)) => return Err(GatewayError::Auth(m)),
                Err(BackendError::Malformed(m)) => return Err(GatewayError::Malformed(m)),
                Err(BackendError::Rejected(m)) => return Err(GatewayError::Rejected(m)),
            }
        };
        if let Some(cache) = &self.cache {
            cache.put(&CacheEntry {
                fingerprint: fingerprint.clone(),
                request: key,
                response: raw_text.clone(),
            })?;
        }
        Ok(CompletionResult {
            raw_text,
            model_name: config.model_name.clone(),
            request_fingerprint: fingerprint,
            cached: false,
        })
    }
}
