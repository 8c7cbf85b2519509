//! Uniform access to chat-completion endpoints: an OpenAI-compatible HTTP
//! client and a deterministic in-process mock, both behind a persistent
//! content-addressed response cache with retry/backoff on transport failures.

mod cache;
mod http;
mod mock;

pub use cache::{Cache, CacheKey};
pub use http::HttpTransport;
pub use mock::{mock_complete, MockConfig, MockError, MockTransport, REASONING_SCORE_MARKER};

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Mock,
}

/// Backend configuration. Auth tokens are only ever referenced by the name of
/// an environment variable, read at call time; they are never persisted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_timeout: Duration,
    pub max_retries: u32,
    pub auth_token_env: Option<String>,
}

impl BackendConfig {
    pub fn mock(model_name: &str) -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            base_url: None,
            model_name: model_name.to_string(),
            temperature: 0.0,
            max_tokens: DEFAULT_REASONING_MAX_TOKENS,
            request_timeout: Duration::from_secs(60),
            max_retries: 2,
            auth_token_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::HttpChat && self.base_url.is_none() {
            return Err(BackendError::Config(
                "http_chat backend requires base_url".into(),
            ));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::Config(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::Config("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sampling defaults: temperature 0 for reproducibility; generous budget for
/// the reasoning step, a handful of tokens for the extraction step.
pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_REASONING_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_EXTRACTION_MAX_TOKENS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

/// A chat request; `params` overrides the backend config when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub params: Option<SamplingParams>,
}

impl ChatRequest {
    /// Single user message with default sampling.
    pub fn user(content: impl Into<String>) -> Self {
        ChatRequest {
            messages: vec![ChatMessage {
                role: ChatRole::User,
                content: content.into(),
            }],
            params: None,
        }
    }

    pub fn with_params(mut self, params: SamplingParams) -> Self {
        self.params = Some(params);
        self
    }

    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == ChatRole::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub latency_ms: u64,
    /// 1-based transport attempt that produced the content.
    pub attempt: u32,
    pub from_cache: bool,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    Request(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    TransportExhausted { attempts: u32, message: String },
    #[error("endpoint returned status {status} after {attempts} attempt(s): {body}")]
    HttpStatus {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("malformed response envelope: {0}")]
    MalformedResponse(String),
    #[error("mock backend: {0}")]
    Mock(String),
    #[error("cache i/o: {0}")]
    CacheIo(#[from] std::io::Error),
}

/// Transport-level failure; the backend decides what is retryable.
#[derive(Debug)]
pub enum TransportError {
    /// Network-level problem (connect, timeout, read). Retryable.
    Network(String),
    /// Non-2xx HTTP status with its body. Retryable for 5xx and 429.
    Status { code: u16, body: String },
    /// 2xx but the body is not a chat-completion envelope. Not retryable.
    Malformed(String),
    /// Mock could not classify the prompt. Not retryable.
    Mock(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Network(_) => true,
            TransportError::Status { code, .. } => *code >= 500 || *code == 429,
            TransportError::Malformed(_) | TransportError::Mock(_) => false,
        }
    }
}

/// One request/response exchange with a model endpoint.
pub trait Transport: Send + Sync {
    fn send(&self, config: &BackendConfig, request: &ChatRequest)
        -> Result<String, TransportError>;
}

pub fn effective_params(config: &BackendConfig, request: &ChatRequest) -> SamplingParams {
    request.params.unwrap_or(SamplingParams {
        temperature: config.temperature,
        max_tokens: config.max_tokens,
    })
}

/// A configured endpoint plus optional cache. Snapshot-able for manifests.
pub struct Backend {
    config: BackendConfig,
    cache: Option<Cache>,
    transport: Arc<dyn Transport>,
    backoff_base: Duration,
}

impl Backend {
    /// Builds the transport implied by `config.kind`. Mock backends get the
    /// default (noise-free) mock config.
    pub fn new(config: BackendConfig, cache: Option<Cache>) -> Result<Self, BackendError> {
        config.validate()?;
        let transport: Arc<dyn Transport> = match config.kind {
            BackendKind::HttpChat => Arc::new(HttpTransport::new(&config)),
            BackendKind::Mock => Arc::new(MockTransport::new(MockConfig::default())),
        };
        Ok(Backend {
            config,
            cache,
            transport,
            backoff_base: Duration::from_millis(250),
        })
    }

    pub fn with_mock(
        config: BackendConfig,
        cache: Option<Cache>,
        mock: MockConfig,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(Backend {
            config,
            cache,
            transport: Arc::new(MockTransport::new(mock)),
            backoff_base: Duration::from_millis(250),
        })
    }

    /// Injects a custom transport; used by tests for scripted endpoints.
    pub fn with_transport(
        config: BackendConfig,
        cache: Option<Cache>,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(Backend {
            config,
            cache,
            transport,
            backoff_base: Duration::from_millis(250),
        })
    }

    /// Shrinks retry backoff; keeps failure tests fast.
    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn model_name(&self) -> &str {
        &self.config.model_name
    }

    /// Completes a chat request: cache first, then the transport with up to
    /// `max_retries` retries (exponential backoff) on retryable failures.
    /// Successful responses are written back to the cache.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        if request.messages.is_empty() {
            return Err(BackendError::Request("request has no messages".into()));
        }
        if request.messages.last().map(|m| m.role) != Some(ChatRole::User) {
            return Err(BackendError::Request(
                "last message must have role user".into(),
            ));
        }

        let params = effective_params(&self.config, request);
        let key = CacheKey::for_request(&self.config, &request.messages, params);
        let started = Instant::now();

        if let Some(cache) = &self.cache {
            if let Some(content) = cache.lookup(&key)? {
                return Ok(ChatResponse {
                    content,
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempt: 1,
                    from_cache: true,
                });
            }
        }

        let max_attempts = self.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.send(&self.config, request) {
                Ok(content) => {
                    if let Some(cache) = &self.cache {
                        cache.store(&key, &content, &self.config, &request.messages, params)?;
                    }
                    return Ok(ChatResponse {
                        content,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt,
                        from_cache: false,
                    });
                }
                Err(err) => {
                    if err.retryable() && attempt < max_attempts {
                        std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
                        continue;
                    }
                    return Err(match err {
                        TransportError::Network(message) => BackendError::TransportExhausted {
                            attempts: attempt,
                            message,
                        },
                        TransportError::Status { code, body } => BackendError::HttpStatus {
                            status: code,
                            attempts: attempt,
                            body,
                        },
                        TransportError::Malformed(message) => {
                            BackendError::MalformedResponse(message)
                        }
                        TransportError::Mock(message) => BackendError::Mock(message),
                    });
                }
            }
        }
    }
}

/// Redacted config snapshot for manifests: structure, never secrets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSnapshot {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_timeout_ms: u64,
    pub max_retries: u32,
    pub auth_token_env: Option<String>,
}

impl From<&BackendConfig> for BackendSnapshot {
    fn from(c: &BackendConfig) -> Self {
        BackendSnapshot {
            kind: c.kind,
            base_url: c.base_url.clone(),
            model_name: c.model_name.clone(),
            temperature: c.temperature,
            max_tokens: c.max_tokens,
            request_timeout_ms: c.request_timeout.as_millis() as u64,
            max_retries: c.max_retries,
            auth_token_env: c.auth_token_env.clone(),
        }
    }
}

/// Deterministic transports for tests: scripted replies, programmable
/// failures, call counting. Kept in the library proper so integration tests
/// and downstream crates can drive the pipeline without a network.
pub mod testing {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    /// Fails `failures` times with the given error kind, then succeeds.
    pub struct FlakyTransport {
        pub calls: AtomicUsize,
        pub failures: usize,
        pub status: Option<u16>,
        pub reply: String,
    }

    impl Transport for FlakyTransport {
        fn send(&self, _: &BackendConfig, _: &ChatRequest) -> Result<String, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                match self.status {
                    Some(code) => Err(TransportError::Status {
                        code,
                        body: "simulated".into(),
                    }),
                    None => Err(TransportError::Network("simulated outage".into())),
                }
            } else {
                Ok(self.reply.clone())
            }
        }
    }

    /// Returns canned replies in order; errors once the script runs out.
    pub struct ScriptedTransport {
        pub script: Mutex<Vec<String>>,
        pub calls: AtomicUsize,
    }

    impl ScriptedTransport {
        pub fn new(replies: &[&str]) -> Self {
            ScriptedTransport {
                script: Mutex::new(replies.iter().rev().map(|s| s.to_string()).collect()),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl Transport for ScriptedTransport {
        fn send(&self, _: &BackendConfig, _: &ChatRequest) -> Result<String, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.script
                .lock()
                .unwrap()
                .pop()
                .ok_or_else(|| TransportError::Network("script exhausted".into()))
        }
    }

    /// Delegates to an inner transport while counting calls and recording
    /// request contents.
    pub struct RecordingTransport<T: Transport> {
        pub inner: T,
        pub calls: AtomicUsize,
        pub requests: Mutex<Vec<String>>,
    }

    impl<T: Transport> RecordingTransport<T> {
        pub fn new(inner: T) -> Self {
            RecordingTransport {
                inner,
                calls: AtomicUsize::new(0),
                requests: Mutex::new(Vec::new()),
            }
        }
    }

    impl<T: Transport> Transport for RecordingTransport<T> {
        fn send(
            &self,
            config: &BackendConfig,
            request: &ChatRequest,
        ) -> Result<String, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if let Some(content) = request.last_user_content() {
                self.requests.lock().unwrap().push(content.to_string());
            }
            self.inner.send(config, request)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn test_config(max_retries: u32) -> BackendConfig {
        BackendConfig {
            max_retries,
            ..BackendConfig::mock("test-model")
        }
    }

    #[test]
    fn retries_then_succeeds() {
        let transport = Arc::new(FlakyTransport {
            calls: AtomicUsize::new(0),
            failures: 2,
            status: None,
            reply: "ok".into(),
        });
        let backend = Backend::with_transport(test_config(3), None, transport.clone())
            .unwrap()
            .with_backoff(Duration::from_millis(1));
        let resp = backend.complete(&ChatRequest::user("hi")).unwrap();
        assert_eq!(resp.content, "ok");
        assert_eq!(resp.attempt, 3);
        assert!(!resp.from_cache);
        assert_eq!(transport.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn persistent_500_exhausts_after_max_retries_plus_one() {
        let transport = Arc::new(FlakyTransport {
            calls: AtomicUsize::new(0),
            failures: usize::MAX,
            status: Some(500),
            reply: String::new(),
        });
        let backend = Backend::with_transport(test_config(2), None, transport.clone())
            .unwrap()
            .with_backoff(Duration::from_millis(1));
        let err = backend.complete(&ChatRequest::user("hi")).unwrap_err();
        match err {
            BackendError::HttpStatus {
                status, attempts, ..
            } => {
                assert_eq!(status, 500);
                assert_eq!(attempts, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(transport.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_error_not_retried() {
        let transport = Arc::new(FlakyTransport {
            calls: AtomicUsize::new(0),
            failures: usize::MAX,
            status: Some(401),
            reply: String::new(),
        });
        let backend = Backend::with_transport(test_config(5), None, transport.clone())
            .unwrap()
            .with_backoff(Duration::from_millis(1));
        let err = backend.complete(&ChatRequest::user("hi")).unwrap_err();
        assert!(matches!(
            err,
            BackendError::HttpStatus {
                status: 401,
                attempts: 1,
                ..
            }
        ));
        assert_eq!(transport.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn request_shape_validated() {
        let backend = Backend::new(test_config(0), None).unwrap();
        let empty = ChatRequest {
            messages: vec![],
            params: None,
        };
        assert!(matches!(
            backend.complete(&empty),
            Err(BackendError::Request(_))
        ));
        let assistant_last = ChatRequest {
            messages: vec![ChatMessage {
                role: ChatRole::Assistant,
                content: "x".into(),
            }],
            params: None,
        };
        assert!(matches!(
            backend.complete(&assistant_last),
            Err(BackendError::Request(_))
        ));
    }

    #[test]
    fn identical_request_twice_hits_cache_with_identical_content() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::open(dir.path()).unwrap();
        let transport = Arc::new(ScriptedTransport::new(&["first answer"]));
        let backend =
            Backend::with_transport(test_config(0), Some(cache), transport.clone()).unwrap();
        let request = ChatRequest::user("same request");
        let first = backend.complete(&request).unwrap();
        assert!(!first.from_cache);
        let second = backend.complete(&request).unwrap();
        assert!(second.from_cache);
        assert_eq!(second.content, first.content);
        // The script held one reply; the second call never reached it.
        assert_eq!(transport.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn http_config_requires_base_url() {
        let config = BackendConfig {
            kind: BackendKind::HttpChat,
            base_url: None,
            ..BackendConfig::mock("m")
        };
        assert!(matches!(
            Backend::new(config, None),
            Err(BackendError::Config(_))
        ));
    }
}
