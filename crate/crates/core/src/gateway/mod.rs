//! Uniform access to chat completion and text embedding.
//!
//! Every LLM call in the engine goes through [`Gateway`]. A backend is one of
//! live HTTP (OpenAI-compatible), record (live + cassette append) or replay
//! (cassette lookup, no network). The scripted backend exists for authoring
//! cassettes and for unit tests.

mod cassette;
mod embed;
mod http;
mod scripted;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteEntry, EntryKind, RecordingBackend, RecordingEmbedder, ReplayBackend, ReplayEmbedder};
pub use embed::{EmbeddingProvider, EmbeddingVector, HashedBagEmbedder, HttpEmbedder, DEFAULT_EMBEDDING_DIM};
pub use http::{HttpBackend, HttpSettings};
pub use scripted::{ScriptedBackend, ScriptedReply};

pub const DEFAULT_MAX_TOKENS: u32 = 16_384;
pub const DEFAULT_TEMPERATURE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("backend `{backend}` unavailable: {reason}")]
    BackendUnavailable { backend: String, reason: String },
    #[error("cassette has no (remaining) entry for fingerprint {fingerprint}")]
    CassetteMiss { fingerprint: String },
    #[error("request exceeds the context limit of backend `{backend}`: {detail}")]
    ContextOverflow { backend: String, detail: String },
    #[error("no backend named `{0}` is configured")]
    UnknownBackend(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding is the zero vector")]
    ZeroVector,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cassette i/o: {0}")]
    CassetteIo(String),
}

impl GatewayError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, GatewayError::BackendUnavailable { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// One chat completion request.
///
/// `lane` names the logical caller (a team id, the debate coordinator, the
/// memory summarizer). It is part of the fingerprint so two teams issuing the
/// same prompt for one problem get their own recorded answers, while the
/// backend id stays out of it so a cassette can drive any backend pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub backend_id: String,
    pub lane: String,
    pub messages: Vec<Message>,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn new(backend_id: impl Into<String>, messages: Vec<Message>) -> Result<Self, GatewayError> {
        let request = Self {
            backend_id: backend_id.into(),
            lane: String::new(),
            messages,
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        };
        request.validate()?;
        Ok(request)
    }

    pub fn with_lane(mut self, lane: impl Into<String>) -> Self {
        self.lane = lane.into();
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| GatewayError::InvalidRequest("messages must not be empty".into()))?;
        if first.role == Role::Assistant {
            return Err(GatewayError::InvalidRequest(
                "first message must be a system or user message".into(),
            ));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest("temperature must be a non-negative real".into()));
        }
        Ok(())
    }

    /// Stable hash of (kind, lane, canonical messages, max_tokens, temperature).
    pub fn fingerprint(&self) -> String {
        let messages: Vec<[&str; 2]> =
            self.messages.iter().map(|m| [m.role.as_str(), m.content.as_str()]).collect();
        let canonical = serde_json::json!({
            "kind": "chat",
            "lane": self.lane,
            "messages": messages,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
        });
        sha256_hex(&canonical)
    }

    /// Short human-readable summary stored next to cassette entries.
    pub fn summary(&self) -> String {
        let last = self.messages.last().map(|m| m.content.as_str()).unwrap_or_default();
        let head: String = last.lines().find(|l| !l.trim().is_empty()).unwrap_or_default().chars().take(80).collect();
        format!("[{}] {} msgs: {}", self.lane, self.messages.len(), head)
    }
}

pub(crate) fn embed_fingerprint(text: &str) -> String {
    sha256_hex(&serde_json::json!({ "kind": "embed", "text": text }))
}

fn sha256_hex(value: &serde_json::Value) -> String {
    // serde_json::Value objects are BTreeMap-backed, so keys serialize sorted.
    let bytes = serde_json::to_vec(value).expect("json values always serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<Usage>,
    pub backend_id: String,
}

/// Something that can answer a chat request.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

/// Per-backend sampling defaults applied by [`Gateway::request`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingDefaults {
    pub max_tokens: u32,
    pub temperature: f64,
}

impl Default for SamplingDefaults {
    fn default() -> Self {
        Self { max_tokens: DEFAULT_MAX_TOKENS, temperature: DEFAULT_TEMPERATURE }
    }
}

struct BackendSlot {
    backend: Arc<dyn ChatBackend>,
    defaults: SamplingDefaults,
}

pub struct Gateway {
    backends: HashMap<String, BackendSlot>,
    embedder: Arc<dyn EmbeddingProvider>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.backends.keys().collect();
        names.sort();
        f.debug_struct("Gateway").field("backends", &names).field("embedding_dim", &self.embedder.dim()).finish()
    }
}

impl Gateway {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self { backends: HashMap::new(), embedder }
    }

    pub fn with_backend(mut self, name: impl Into<String>, backend: Arc<dyn ChatBackend>) -> Self {
        self.add_backend(name, backend, SamplingDefaults::default());
        self
    }

    pub fn add_backend(&mut self, name: impl Into<String>, backend: Arc<dyn ChatBackend>, defaults: SamplingDefaults) {
        self.backends.insert(name.into(), BackendSlot { backend, defaults });
    }

    pub fn has_backend(&self, name: &str) -> bool {
        self.backends.contains_key(name)
    }

    /// Builds a request carrying the backend's sampling defaults.
    pub fn request(&self, backend_id: &str, lane: &str, messages: Vec<Message>) -> Result<ChatRequest, GatewayError> {
        let slot = self.backends.get(backend_id).ok_or_else(|| GatewayError::UnknownBackend(backend_id.into()))?;
        Ok(ChatRequest::new(backend_id, messages)?
            .with_lane(lane)
            .with_max_tokens(slot.defaults.max_tokens)
            .with_temperature(slot.defaults.temperature))
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let slot = self
            .backends
            .get(&request.backend_id)
            .ok_or_else(|| GatewayError::UnknownBackend(request.backend_id.clone()))?;
        let started = std::time::Instant::now();
        let result = slot.backend.complete(request);
        tracing::debug!(
            backend = %request.backend_id,
            lane = %request.lane,
            ok = result.is_ok(),
            elapsed_ms = started.elapsed().as_millis() as u64,
            "chat completion"
        );
        result
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedder.dim()
    }

    /// Embeds `text` and L2-normalizes the result.
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let raw = self.embedder.embed_raw(text)?;
        let expected = self.embedder.dim();
        if raw.len() != expected {
            return Err(GatewayError::DimensionMismatch { expected, got: raw.len() });
        }
        EmbeddingVector::normalized(raw)
    }
}
