//! Chat-completion clients.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            system: system.into(),
            user: user.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: 0.0,
        }
    }
}

pub const DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChatError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response body: {0}")]
    Decode(String),
    #[error("no recorded response for request {0}")]
    CassetteMiss(String),
    #[error("missing credentials: environment variable {0} is not set")]
    MissingKey(String),
}

impl ChatError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ChatError::Transport(_) => true,
            ChatError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError>;
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        (**self).complete(request)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for std::sync::Arc<C> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        (**self).complete(request)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireFormat {
    /// `{model, messages, temperature, max_tokens}` with a Bearer key.
    #[default]
    OpenAi,
    /// Top-level `system` field, `x-api-key` header.
    Anthropic,
}

/// Endpoint settings, usually read from the `--llm-config` JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default)]
    pub wire: WireFormat,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "POSR_API_KEY".into()
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

fn default_timeout() -> u64 {
    120
}

impl LlmConfig {
    pub fn request(&self, system: impl Into<String>, user: impl Into<String>) -> ChatRequest {
        ChatRequest {
            max_tokens: self.max_tokens,
            temperature: self.temperature,
            ..ChatRequest::new(self.model.clone(), system, user)
        }
    }
}

pub struct HttpClient {
    http: reqwest::blocking::Client,
    endpoint: String,
    key: String,
    wire: WireFormat,
}

impl HttpClient {
    pub fn from_config(config: &LlmConfig) -> Result<Self, ChatError> {
        let key = std::env::var(&config.api_key_env).map_err(|_| ChatError::MissingKey(config.api_key_env.clone()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ChatError::Transport(e.to_string()))?;
        Ok(Self {
            http,
            endpoint: config.endpoint.clone(),
            key,
            wire: config.wire,
        })
    }
}

/// Request body in the given wire format.
pub fn wire_body(request: &ChatRequest, wire: WireFormat) -> Value {
    match wire {
        WireFormat::OpenAi => json!({
            "model": request.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }),
        WireFormat::Anthropic => json!({
            "model": request.model,
            "system": request.system,
            "messages": [{"role": "user", "content": request.user}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }),
    }
}

/// Accepts either an OpenAI-style (`choices`) or Anthropic-style
/// (`content` blocks) response body.
pub fn decode_response(body: &Value) -> Result<ChatResponse, ChatError> {
    let usage = body.get("usage");
    let count = |keys: &[&str]| -> u64 {
        keys.iter()
            .find_map(|k| usage.and_then(|u| u.get(*k)).and_then(Value::as_u64))
            .unwrap_or(0)
    };
    let input_tokens = count(&["prompt_tokens", "input_tokens"]);
    let output_tokens = count(&["completion_tokens", "output_tokens"]);
    if let Some(text) = body.pointer("/choices/0/message/content").and_then(Value::as_str) {
        return Ok(ChatResponse {
            text: text.to_string(),
            input_tokens,
            output_tokens,
        });
    }
    if let Some(blocks) = body.get("content").and_then(Value::as_array) {
        let text: String = blocks
            .iter()
            .filter_map(|b| b.get("text").and_then(Value::as_str))
            .collect();
        return Ok(ChatResponse {
            text,
            input_tokens,
            output_tokens,
        });
    }
    Err(ChatError::Decode(body.to_string()))
}

impl ChatClient for HttpClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let mut builder = self.http.post(&self.endpoint).json(&wire_body(request, self.wire));
        builder = match self.wire {
            WireFormat::OpenAi => builder.bearer_auth(&self.key),
            WireFormat::Anthropic => builder
                .header("x-api-key", &self.key)
                .header("anthropic-version", "2023-06-01"),
        };
        let response = builder.send().map_err(|e| ChatError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response.text().map_err(|e| ChatError::Transport(e.to_string()))?;
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(ChatError::Auth(body));
        }
        if !status.is_success() {
            return Err(ChatError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let value: Value = serde_json::from_str(&body).map_err(|e| ChatError::Decode(e.to_string()))?;
        decode_response(&value)
    }
}

/// Retries transient failures with exponential backoff.
pub struct RetryingClient<C> {
    inner: C,
    attempts: usize,
    base_delay: Duration,
}

impl<C> RetryingClient<C> {
    /// Three attempts, starting at one second.
    pub fn new(inner: C) -> Self {
        Self::with_policy(inner, 3, Duration::from_secs(1))
    }

    pub fn with_policy(inner: C, attempts: usize, base_delay: Duration) -> Self {
        Self {
            inner,
            attempts: attempts.max(1),
            base_delay,
        }
    }
}

impl<C: ChatClient> ChatClient for RetryingClient<C> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match self.inner.complete(request) {
                Err(e) if e.is_retryable() && attempt < self.attempts => {
                    log::warn!("attempt {attempt} failed: {e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Spaces requests at least `interval` apart across all threads.
pub struct RateLimited<C> {
    inner: C,
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl<C> RateLimited<C> {
    pub fn per_minute(inner: C, requests: u32) -> Self {
        Self {
            inner,
            interval: Duration::from_secs(60) / requests.max(1),
            next: Mutex::new(None),
        }
    }
}

impl<C: ChatClient> ChatClient for RateLimited<C> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        self.inner.complete(request)
    }
}

type Responder = dyn Fn(&ChatRequest) -> Result<ChatResponse, ChatError> + Send + Sync;

/// Scripted client backed by a closure; counts calls.
pub struct FnClient {
    respond: Box<Responder>,
    calls: AtomicUsize,
}

impl FnClient {
    pub fn new(respond: impl Fn(&ChatRequest) -> Result<ChatResponse, ChatError> + Send + Sync + 'static) -> Self {
        Self {
            respond: Box::new(respond),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for FnClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.respond)(request)
    }
}

/// Rough token count (four characters per token) for scripted responders.
pub fn approx_tokens(text: &str) -> u64 {
    text.chars().count().div_ceil(4) as u64
}
