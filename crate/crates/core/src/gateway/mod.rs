//! Chat-completion dispatch.
//!
//! A [`Gateway`] pairs a [`BackendConfig`] with a [`ChatBackend`]
//! implementation (the OpenAI-compatible [`HttpBackend`] or the deterministic
//! [`MockBackend`]). It owns retry with exponential backoff, and
//! [`Gateway::classify_batch`] adds bounded parallelism and a token-bucket
//! rate limit while keeping results in input order.

mod http;
mod mock;
mod rate;

pub use http::HttpBackend;
pub use mock::{make_mock_backend, MockBackend};
pub use rate::TokenBucket;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::PromptBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// Body of `POST {base_url}/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    /// Routing metadata for mocks and logs; never sent on the wire.
    #[serde(skip)]
    pub paragraph_id: String,
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server error: http {0}")]
    Server(u16),
    #[error("request rejected: http {0}")]
    Http(u16),
    #[error("response schema error: {0}")]
    Schema(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Self::RateLimited { .. } | Self::Transport(_) | Self::Server(_)
        )
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Self::Auth(_) => ErrorKind::Auth,
            Self::RateLimited { .. } => ErrorKind::RateLimited,
            Self::Transport(_) | Self::Server(_) => ErrorKind::Transport,
            Self::Http(_) => ErrorKind::Http,
            Self::Schema(_) => ErrorKind::Schema,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Auth,
    RateLimited,
    Transport,
    Http,
    Schema,
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    /// Returns the first candidate's message text verbatim.
    async fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    Mock,
}

fn default_max_tokens() -> u32 {
    64
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_floor() -> f64 {
    0.001
}
fn default_true() -> bool {
    true
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_mock_content() -> String {
    "0_0".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    #[serde(default)]
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model_id: String,
    /// Environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_ms")]
    pub request_timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// False for providers that reject a temperature of exactly 0.
    #[serde(default = "default_true")]
    pub accepts_zero_temperature: bool,
    #[serde(default = "default_floor")]
    pub min_temperature_floor: f64,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
    /// Requests per second across a batch.
    #[serde(default)]
    pub rate_limit_rps: Option<f64>,
    /// Extra provider-specific headers.
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    /// Mock backends: content returned for unknown paragraph ids.
    #[serde(default = "default_mock_content")]
    pub mock_default: String,
    /// Mock backends: JSON object mapping paragraph id to content.
    #[serde(default)]
    pub mock_table: Option<PathBuf>,
}

impl BackendConfig {
    pub fn new(
        name: impl Into<String>,
        base_url: impl Into<String>,
        model_id: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: BackendKind::Http,
            base_url: base_url.into(),
            model_id: model_id.into(),
            api_key_env: None,
            temperature: 0.0,
            max_output_tokens: default_max_tokens(),
            request_timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            accepts_zero_temperature: true,
            min_temperature_floor: default_floor(),
            initial_backoff_ms: default_backoff_ms(),
            rate_limit_rps: None,
            headers: BTreeMap::new(),
            mock_default: default_mock_content(),
            mock_table: None,
        }
    }

    pub fn mock(name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Mock,
            initial_backoff_ms: 1,
            ..Self::new(name, "", "mock")
        }
    }

    pub fn effective_temperature(&self) -> f64 {
        if self.accepts_zero_temperature {
            self.temperature
        } else {
            self.temperature.max(self.min_temperature_floor)
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }

    /// Delay before retry `n` (1-based): `initial * 2^(n-1)`.
    pub fn backoff_delay(&self, retry: u32) -> Duration {
        let base = self.initial_backoff_ms.max(1);
        Duration::from_millis(base.saturating_mul(1u64 << (retry.saturating_sub(1)).min(32)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportStatus {
    Ok,
    FailedAfterRetries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawModelResponse {
    pub paragraph_id: String,
    pub backend_name: String,
    /// Verbatim model output; empty when the transport failed.
    pub content: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub transport_status: TransportStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<ErrorKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub error_chain: Vec<String>,
}

impl RawModelResponse {
    pub fn ok(paragraph_id: &str, backend_name: &str, content: impl Into<String>) -> Self {
        Self {
            paragraph_id: paragraph_id.to_string(),
            backend_name: backend_name.to_string(),
            content: content.into(),
            latency_ms: 0,
            attempt_count: 1,
            transport_status: TransportStatus::Ok,
            error_kind: None,
            error_chain: Vec::new(),
        }
    }
}

/// One item of a classification batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationRequest {
    pub paragraph_id: String,
    pub bundle: PromptBundle,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend {0}: base_url is required for http backends")]
    MissingBaseUrl(String),
    #[error("cannot build http client: {0}")]
    Client(String),
    #[error("cannot read mock table {path}: {message}")]
    MockTable { path: String, message: String },
}

#[derive(Clone)]
pub struct Gateway {
    config: BackendConfig,
    backend: Arc<dyn ChatBackend>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(config: BackendConfig, backend: Arc<dyn ChatBackend>) -> Self {
        Self { config, backend }
    }

    /// Builds the backend named by `config.kind`.
    pub fn from_config(config: BackendConfig) -> Result<Self, GatewayError> {
        let backend: Arc<dyn ChatBackend> = match config.kind {
            BackendKind::Http => Arc::new(HttpBackend::new(&config)?),
            BackendKind::Mock => {
                let table = match &config.mock_table {
                    Some(path) => {
                        let err = |message: String| GatewayError::MockTable {
                            path: path.display().to_string(),
                            message,
                        };
                        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
                        serde_json::from_str(&text).map_err(|e| err(e.to_string()))?
                    }
                    None => Default::default(),
                };
                Arc::new(make_mock_backend(table, config.mock_default.clone()))
            }
        };
        Ok(Self::new(config, backend))
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn chat_request(&self, request: &ClassificationRequest) -> ChatRequest {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &request.bundle.system_text {
            messages.push(ChatMessage::new(Role::System, system.clone()));
        }
        messages.push(ChatMessage::new(
            Role::User,
            request.bundle.user_text.clone(),
        ));
        ChatRequest {
            paragraph_id: request.paragraph_id.clone(),
            model: self.config.model_id.clone(),
            messages,
            temperature: self.config.effective_temperature(),
            max_tokens: self.config.max_output_tokens,
        }
    }

    pub async fn classify_one(&self, request: &ClassificationRequest) -> RawModelResponse {
        self.classify_limited(request, None).await
    }

    async fn classify_limited(
        &self,
        request: &ClassificationRequest,
        limiter: Option<&TokenBucket>,
    ) -> RawModelResponse {
        let chat = self.chat_request(request);
        let started = Instant::now();
        let mut errors = Vec::new();
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            if let Some(limiter) = limiter {
                limiter.acquire().await;
            }
            match self.backend.complete(&chat).await {
                Ok(content) => {
                    return RawModelResponse {
                        paragraph_id: request.paragraph_id.clone(),
                        backend_name: self.config.name.clone(),
                        content,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt_count: attempt,
                        transport_status: TransportStatus::Ok,
                        error_kind: None,
                        error_chain: errors,
                    };
                }
                Err(err) => {
                    errors.push(err.to_string());
                    if !err.is_retryable() || attempt > self.config.max_retries {
                        tracing::warn!(
                            backend = %self.config.name,
                            paragraph = %request.paragraph_id,
                            attempts = attempt,
                            error = %err,
                            "request failed"
                        );
                        return RawModelResponse {
                            paragraph_id: request.paragraph_id.clone(),
                            backend_name: self.config.name.clone(),
                            content: String::new(),
                            latency_ms: started.elapsed().as_millis() as u64,
                            attempt_count: attempt,
                            transport_status: TransportStatus::FailedAfterRetries,
                            error_kind: Some(err.kind()),
                            error_chain: errors,
                        };
                    }
                    let mut delay = self.config.backoff_delay(attempt);
                    if let BackendError::RateLimited {
                        retry_after: Some(hint),
                    } = err
                    {
                        delay = delay.max(hint);
                    }
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }

    /// Classifies `requests` with at most `parallelism` in flight and, when
    /// given, at most `rate_limit` requests per second. Output order equals
    /// input order; per-item failures are embedded in the responses.
    pub async fn classify_batch(
        &self,
        requests: &[ClassificationRequest],
        parallelism: usize,
        rate_limit: Option<f64>,
    ) -> Vec<RawModelResponse> {
        let limiter = rate_limit
            .filter(|r| r.is_finite() && *r > 0.0)
            .map(|r| TokenBucket::new(r, 1.0));
        let limiter = limiter.as_ref();
        stream::iter(requests)
            .map(|req| self.classify_limited(req, limiter))
            .buffered(parallelism.max(1))
            .collect()
            .await
    }
}
