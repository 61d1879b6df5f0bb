//! External model backends: the infill generator, MT systems under test and
//! quality scorers.
//!
//! Every backend is a [`Client`]: a [`BackendSpec`] plus a [`Transport`]
//! (HTTP, replay-only, or a deterministic stub) sitting behind a
//! content-addressed [`Cache`] and a retry loop. Identical requests are
//! answered once; concurrent identical requests wait for the first.

mod cache;
mod http;
mod stub;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use cache::{Cache, CacheEntry};
pub use http::HttpTransport;
pub use stub::{length_ratio, unigram_f1, StubTransport};

use crate::casegen::{PromptRequest, SYSTEM_PROMPT};
use crate::QualityScore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Infill,
    Translator,
    ScorerRefBased,
    ScorerRefFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    Http,
    ReplayCache,
    Stub,
}

/// Deterministic offline behaviour for `transport = "stub"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StubConfig {
    /// Infill: every mask becomes `src` on the source side and `ref` on the
    /// reference side.
    Substitute {
        src: String,
        #[serde(rename = "ref")]
        reference: String,
    },
    /// Translator: returns the source unchanged.
    Identity,
    /// Translator: token-by-token dictionary lookup, unknown tokens copied.
    Lexicon { entries: BTreeMap<String, String> },
    /// Reference-based scorer: unigram F1 of hypothesis against reference.
    UnigramF1,
    /// Reference-free scorer: `min(|src|, |hyp|) / max(|src|, |hyp|)` over
    /// whitespace tokens.
    LengthRatio,
    /// Any scorer: a value in `[0, 1)` derived from the SHA-256 of the inputs.
    Digest,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub backend_id: String,
    pub kind: BackendKind,
    pub transport: TransportKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub auth_env_var: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default)]
    pub stub: Option<StubConfig>,
}

impl BackendSpec {
    pub fn stub(backend_id: impl Into<String>, kind: BackendKind, stub: StubConfig) -> Self {
        Self {
            backend_id: backend_id.into(),
            kind,
            transport: TransportKind::Stub,
            endpoint: None,
            model_name: None,
            auth_env_var: None,
            timeout_secs: default_timeout(),
            max_retries: 0,
            backoff_ms: 0,
            stub: Some(stub),
        }
    }

    pub fn http(backend_id: impl Into<String>, kind: BackendKind, endpoint: impl Into<String>) -> Self {
        Self {
            backend_id: backend_id.into(),
            kind,
            transport: TransportKind::Http,
            endpoint: Some(endpoint.into()),
            model_name: None,
            auth_env_var: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            stub: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let invalid = |m: &str| BackendError::InvalidSpec {
            backend_id: self.backend_id.clone(),
            message: m.to_string(),
        };
        if self.backend_id.is_empty() || self.backend_id.contains(['/', '\\']) {
            return Err(invalid("backend_id must be non-empty and contain no path separators"));
        }
        if self.transport == TransportKind::Http && self.endpoint.is_none() {
            return Err(invalid("http transport requires an endpoint"));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(invalid("timeout_secs must be positive"));
        }
        if self.transport == TransportKind::Stub {
            stub::check_config(self).map_err(|m| invalid(&m))?;
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("{backend_id}: request timed out")]
    Timeout { backend_id: String },
    #[error("{backend_id}: HTTP status {code}")]
    HttpStatus { backend_id: String, code: u16 },
    #[error("{backend_id}: no cached reply for request {key}")]
    CacheMiss { backend_id: String, key: String },
    #[error("{backend_id}: non-numeric scorer reply {reply:?}")]
    NonNumericReply { backend_id: String, reply: String },
    #[error("{backend_id}: malformed reply: {message}")]
    MalformedReply { backend_id: String, message: String },
    #[error("{backend_id}: transport error: {message}")]
    Transport { backend_id: String, message: String },
    #[error("{backend_id}: environment variable {var} is not set")]
    MissingCredential { backend_id: String, var: String },
    #[error("{backend_id}: invalid backend spec: {message}")]
    InvalidSpec { backend_id: String, message: String },
    #[error("{backend_id}: backend of kind {actual:?} cannot serve {wanted:?} requests")]
    WrongKind {
        backend_id: String,
        actual: BackendKind,
        wanted: BackendKind,
    },
    #[error("{backend_id}: cache I/O: {message}")]
    CacheIo { backend_id: String, message: String },
}

impl BackendError {
    /// Transient failures worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout { .. } | BackendError::Transport { .. } => true,
            BackendError::HttpStatus { code, .. } => {
                matches!(code, 408 | 429) || (500..600).contains(code)
            }
            _ => false,
        }
    }
}

/// A backend request in transport-neutral form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Request {
    /// Chat-completion request. `masks` carries the masked sentences for the
    /// stub infill and is not part of the wire payload.
    Chat {
        system: String,
        user: String,
        #[serde(skip)]
        masks: Option<(Vec<String>, Vec<String>)>,
    },
    Score {
        src: String,
        hyp: String,
        reference: Option<String>,
    },
}

impl Request {
    /// Wire payload; also the cache-key input.
    pub fn payload(&self, spec: &BackendSpec) -> serde_json::Value {
        match self {
            Request::Chat { system, user, .. } => json!({
                "model": spec.model_name,
                "messages": [
                    {"role": "system", "content": system},
                    {"role": "user", "content": user},
                ],
            }),
            Request::Score {
                src,
                hyp,
                reference,
            } => match reference {
                Some(r) => json!({"src": src, "hyp": hyp, "ref": r}),
                None => json!({"src": src, "hyp": hyp}),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reply {
    Text(String),
    Score(f64),
}

pub trait Transport: Send + Sync {
    fn send(&self, spec: &BackendSpec, request: &Request) -> Result<Reply, BackendError>;
}

/// Always misses; replies come only from the cache in front of it.
#[derive(Debug, Default)]
pub struct ReplayTransport;

impl Transport for ReplayTransport {
    fn send(&self, spec: &BackendSpec, request: &Request) -> Result<Reply, BackendError> {
        Err(BackendError::CacheMiss {
            backend_id: spec.backend_id.clone(),
            key: cache::request_key(spec, request),
        })
    }
}

pub trait InfillBackend: Sync {
    fn infill(&self, prompt: &PromptRequest) -> Result<String, BackendError>;
}

pub trait Translator: Sync {
    fn system_id(&self) -> &str;
    fn translate(&self, source: &str) -> Result<String, BackendError>;
}

pub trait RefBasedScorer: Sync {
    fn score_ref_based(
        &self,
        source: &str,
        hypothesis: &str,
        reference: &str,
    ) -> Result<QualityScore<f64>, BackendError>;
}

pub trait RefFreeScorer: Sync {
    fn score_ref_free(&self, source: &str, hypothesis: &str)
        -> Result<QualityScore<f64>, BackendError>;
}

pub struct Client {
    spec: BackendSpec,
    transport: Arc<dyn Transport>,
    cache: Arc<Cache>,
    inflight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl std::fmt::Debug for Client {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Client").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl Client {
    /// Builds the transport named by `spec`. The cache persists under
    /// `cache_root` when given, else lives in memory.
    pub fn new(spec: BackendSpec, cache_root: Option<&Path>) -> Result<Self, BackendError> {
        spec.validate()?;
        let transport: Arc<dyn Transport> = match spec.transport {
            TransportKind::Http => Arc::new(HttpTransport::new()),
            TransportKind::ReplayCache => Arc::new(ReplayTransport),
            TransportKind::Stub => Arc::new(StubTransport),
        };
        let cache = Arc::new(Cache::new(cache_root.map(Path::to_path_buf)));
        Ok(Self::with_transport(spec, transport, cache))
    }

    pub fn with_transport(spec: BackendSpec, transport: Arc<dyn Transport>, cache: Arc<Cache>) -> Self {
        Self {
            spec,
            transport,
            cache,
            inflight: Mutex::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    fn expect_kind(&self, wanted: BackendKind) -> Result<(), BackendError> {
        if self.spec.kind == wanted {
            Ok(())
        } else {
            Err(BackendError::WrongKind {
                backend_id: self.spec.backend_id.clone(),
                actual: self.spec.kind,
                wanted,
            })
        }
    }

    /// Cached, deduplicated, retried call.
    pub fn call(&self, request: &Request) -> Result<Reply, BackendError> {
        let key = cache::request_key(&self.spec, request);
        if let Some(hit) = self.cache.get(&self.spec.backend_id, &key)? {
            return Ok(hit);
        }
        let slot = {
            let mut map = self.inflight.lock().expect("inflight map poisoned");
            map.entry(key.clone()).or_default().clone()
        };
        let _guard = slot.lock().expect("inflight slot poisoned");
        if let Some(hit) = self.cache.get(&self.spec.backend_id, &key)? {
            return Ok(hit);
        }
        let reply = self.send_with_retry(request)?;
        self.cache.put(&self.spec.backend_id, &key, &reply)?;
        Ok(reply)
    }

    fn send_with_retry(&self, request: &Request) -> Result<Reply, BackendError> {
        let mut attempt = 0u32;
        loop {
            match self.transport.send(&self.spec, request) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && attempt < self.spec.max_retries => {
                    let delay = self.spec.backoff_ms.saturating_mul(1u64 << attempt.min(20));
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn text(&self, request: &Request) -> Result<String, BackendError> {
        match self.call(request)? {
            Reply::Text(t) => Ok(t),
            Reply::Score(s) => Err(BackendError::MalformedReply {
                backend_id: self.spec.backend_id.clone(),
                message: format!("expected text, got score {s}"),
            }),
        }
    }

    fn score(&self, request: &Request) -> Result<QualityScore<f64>, BackendError> {
        let value = match self.call(request)? {
            Reply::Score(s) => s,
            Reply::Text(t) => {
                return Err(BackendError::NonNumericReply {
                    backend_id: self.spec.backend_id.clone(),
                    reply: t,
                })
            }
        };
        QualityScore::new(value).map_err(|_| BackendError::NonNumericReply {
            backend_id: self.spec.backend_id.clone(),
            reply: value.to_string(),
        })
    }
}

impl InfillBackend for Client {
    fn infill(&self, prompt: &PromptRequest) -> Result<String, BackendError> {
        self.expect_kind(BackendKind::Infill)?;
        self.text(&Request::Chat {
            system: prompt.system_text.clone(),
            user: prompt.rendered_text.clone(),
            masks: Some((
                prompt.metadata.masked_source.clone(),
                prompt.metadata.masked_reference.clone(),
            )),
        })
    }
}

impl Translator for Client {
    fn system_id(&self) -> &str {
        &self.spec.backend_id
    }

    /// Chat payload with the direct-translation system line and the source
    /// sentence as the user turn.
    fn translate(&self, source: &str) -> Result<String, BackendError> {
        self.expect_kind(BackendKind::Translator)?;
        self.text(&Request::Chat {
            system: SYSTEM_PROMPT.to_string(),
            user: source.to_string(),
            masks: None,
        })
    }
}

impl RefBasedScorer for Client {
    fn score_ref_based(
        &self,
        source: &str,
        hypothesis: &str,
        reference: &str,
    ) -> Result<QualityScore<f64>, BackendError> {
        self.expect_kind(BackendKind::ScorerRefBased)?;
        self.score(&Request::Score {
            src: source.to_string(),
            hyp: hypothesis.to_string(),
            reference: Some(reference.to_string()),
        })
    }
}

impl RefFreeScorer for Client {
    fn score_ref_free(
        &self,
        source: &str,
        hypothesis: &str,
    ) -> Result<QualityScore<f64>, BackendError> {
        self.expect_kind(BackendKind::ScorerRefFree)?;
        self.score(&Request::Score {
            src: source.to_string(),
            hyp: hypothesis.to_string(),
            reference: None,
        })
    }
}
