//! Record/replay of LLM traffic.
//!
//! A cassette is a JSONL file, one entry per line:
//! `{"fingerprint", "kind", "request_summary", "response"}`. Entries sharing
//! a fingerprint are replayed in recording order.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::embed::EmbeddingProvider;
use super::{embed_fingerprint, ChatBackend, ChatRequest, ChatResponse, GatewayError, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Chat,
    Embed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub kind: EntryKind,
    pub request_summary: String,
    pub response: Value,
}

#[derive(Debug, Default)]
struct Tape {
    entries: Vec<CassetteEntry>,
    /// Unconsumed entry indices per (kind, fingerprint).
    pending: HashMap<(EntryKind, String), VecDeque<usize>>,
}

impl Tape {
    fn push(&mut self, entry: CassetteEntry) {
        let idx = self.entries.len();
        self.pending.entry((entry.kind, entry.fingerprint.clone())).or_default().push_back(idx);
        self.entries.push(entry);
    }
}

/// Shared, internally synchronized cassette.
#[derive(Debug)]
pub struct Cassette {
    path: Option<PathBuf>,
    tape: Mutex<Tape>,
}

impl Cassette {
    /// Empty cassette that is never written to disk.
    pub fn in_memory() -> Self {
        Self { path: None, tape: Mutex::new(Tape::default()) }
    }

    /// Cassette backed by `path`. Existing entries are loaded; new ones are
    /// appended to the file as they are recorded.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let mut tape = Tape::default();
        if path.exists() {
            let file = File::open(&path).map_err(|e| io_err(&path, e))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| io_err(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
                    GatewayError::CassetteIo(format!("{}:{}: {e}", path.display(), lineno + 1))
                })?;
                tape.push(entry);
            }
        }
        Ok(Self { path: Some(path), tape: Mutex::new(tape) })
    }

    /// Loads a cassette for replay; the file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(GatewayError::CassetteIo(format!("{} does not exist", path.display())));
        }
        let mut cassette = Self::open(path)?;
        // Replay never writes.
        cassette.path = None;
        Ok(cassette)
    }

    pub fn len(&self) -> usize {
        self.tape.lock().expect("cassette lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<CassetteEntry> {
        self.tape.lock().expect("cassette lock").entries.clone()
    }

    pub fn remaining(&self) -> usize {
        self.tape.lock().expect("cassette lock").pending.values().map(VecDeque::len).sum()
    }

    pub fn append(&self, entry: CassetteEntry) -> Result<(), GatewayError> {
        let mut tape = self.tape.lock().expect("cassette lock");
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&entry).map_err(|e| GatewayError::CassetteIo(e.to_string()))?;
            line.push('\n');
            let mut file =
                OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_err(path, e))?;
            file.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
        }
        tape.push(entry);
        Ok(())
    }

    /// Consumes the oldest unconsumed entry with this fingerprint.
    pub fn take(&self, kind: EntryKind, fingerprint: &str) -> Result<Value, GatewayError> {
        let mut tape = self.tape.lock().expect("cassette lock");
        let idx = tape
            .pending
            .get_mut(&(kind, fingerprint.to_string()))
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| GatewayError::CassetteMiss { fingerprint: fingerprint.to_string() })?;
        Ok(tape.entries[idx].response.clone())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> GatewayError {
    GatewayError::CassetteIo(format!("{}: {e}", path.display()))
}

/// Errors worth replaying: a recorded outage lets fallback paths be replayed too.
fn encode_error(err: &GatewayError) -> Option<Value> {
    match err {
        GatewayError::BackendUnavailable { reason, .. } => {
            Some(serde_json::json!({ "error": { "kind": "backend_unavailable", "message": reason } }))
        }
        GatewayError::ContextOverflow { detail, .. } => {
            Some(serde_json::json!({ "error": { "kind": "context_overflow", "message": detail } }))
        }
        _ => None,
    }
}

fn decode_error(backend: &str, value: &Value) -> Option<GatewayError> {
    let err = value.get("error")?;
    let message = err.get("message").and_then(Value::as_str).unwrap_or_default().to_string();
    Some(match err.get("kind").and_then(Value::as_str) {
        Some("context_overflow") => GatewayError::ContextOverflow { backend: backend.into(), detail: message },
        _ => GatewayError::BackendUnavailable { backend: backend.into(), reason: message },
    })
}

/// Wraps a live backend and appends every exchange to a cassette.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    cassette: Arc<Cassette>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>, cassette: Arc<Cassette>) -> Self {
        Self { inner, cassette }
    }
}

impl ChatBackend for RecordingBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let result = self.inner.complete(request);
        let response = match &result {
            Ok(r) => Some(serde_json::json!({ "text": r.text, "usage": r.usage })),
            Err(e) => encode_error(e),
        };
        if let Some(response) = response {
            self.cassette.append(CassetteEntry {
                fingerprint: request.fingerprint(),
                kind: EntryKind::Chat,
                request_summary: request.summary(),
                response,
            })?;
        }
        result
    }
}

/// Answers purely from a cassette.
pub struct ReplayBackend {
    cassette: Arc<Cassette>,
}

impl ReplayBackend {
    pub fn new(cassette: Arc<Cassette>) -> Self {
        Self { cassette }
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let value = self.cassette.take(EntryKind::Chat, &request.fingerprint())?;
        if let Some(err) = decode_error(&request.backend_id, &value) {
            return Err(err);
        }
        let text = value
            .get("text")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::CassetteIo("chat entry without text".into()))?
            .to_string();
        let usage = value.get("usage").cloned().and_then(|u| serde_json::from_value::<Usage>(u).ok());
        Ok(ChatResponse { text, usage, backend_id: request.backend_id.clone() })
    }
}

pub struct RecordingEmbedder {
    inner: Arc<dyn EmbeddingProvider>,
    cassette: Arc<Cassette>,
}

impl RecordingEmbedder {
    pub fn new(inner: Arc<dyn EmbeddingProvider>, cassette: Arc<Cassette>) -> Self {
        Self { inner, cassette }
    }
}

impl EmbeddingProvider for RecordingEmbedder {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let values = self.inner.embed_raw(text)?;
        self.cassette.append(CassetteEntry {
            fingerprint: embed_fingerprint(text),
            kind: EntryKind::Embed,
            request_summary: text.chars().take(80).collect(),
            response: serde_json::json!({ "values": values }),
        })?;
        Ok(values)
    }
}

pub struct ReplayEmbedder {
    cassette: Arc<Cassette>,
    dim: usize,
}

impl ReplayEmbedder {
    pub fn new(cassette: Arc<Cassette>, dim: usize) -> Self {
        Self { cassette, dim }
    }
}

impl EmbeddingProvider for ReplayEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let value = self.cassette.take(EntryKind::Embed, &embed_fingerprint(text))?;
        serde_json::from_value(value.get("values").cloned().unwrap_or(Value::Null))
            .map_err(|e| GatewayError::CassetteIo(format!("embed entry: {e}")))
    }
}
