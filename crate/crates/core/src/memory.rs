//! Read-write experience memory: solution, debug and debate stores.
//!
//! Each store is append-only, keyed by a unit embedding, and queried by exact
//! top-N cosine similarity (ties go to the older entry). Stores persist as
//! JSONL files with a `{"schema":1,"dim":D}` header line; embeddings are kept
//! inline so loading never calls the embedder.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debate::{TranscriptRecord, Verdict};
use crate::executor::{ExecutionFeedback, Objective};
use crate::gateway::{EmbeddingVector, Gateway, GatewayError, Message};
use crate::prompts::{extract_blocks, outermost_json, Template};
use crate::team::{CandidateSolution, ProblemInstance, RepairEpisode};

pub const SCHEMA_VERSION: u32 = 1;
/// Separator between problem text and disagreement in debate-memory keys.
pub const DISAGREEMENT_SEPARATOR: &str = "\n---DISAGREEMENT---\n";
const LOG_EXCERPT_CHARS: usize = 4000;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("embedding failed: {0}")]
    Embedding(#[from] GatewayError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: store dimension {found} does not match embedder dimension {expected}")]
    DimensionMismatch { path: PathBuf, expected: usize, found: usize },
    #[error("{path}: unsupported schema version {found}")]
    Schema { path: PathBuf, found: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Solution,
    Debug,
    Debate,
}

impl StoreKind {
    pub fn file_name(self) -> &'static str {
        match self {
            StoreKind::Solution => "solution.jsonl",
            StoreKind::Debug => "debug.jsonl",
            StoreKind::Debate => "debate.jsonl",
        }
    }
}

impl fmt::Display for StoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StoreKind::Solution => "solution",
            StoreKind::Debug => "debug",
            StoreKind::Debate => "debate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionEntry {
    pub key_text: String,
    pub key_vec: EmbeddingVector,
    pub formulation: String,
    pub code: String,
    pub objective: f64,
    pub source_instance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugEntry {
    /// Error signature.
    pub key_text: String,
    pub key_vec: EmbeddingVector,
    pub log: ExecutionFeedback,
    pub diagnosis: String,
    pub fix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateEntry {
    /// Problem text + separator + initial disagreement.
    pub key_text: String,
    pub key_vec: EmbeddingVector,
    pub transcript: Vec<TranscriptRecord>,
    pub summary: String,
    pub mismatch_reason: String,
    pub decisive_argument: String,
    pub guardrails: Vec<String>,
    pub modeling_patterns: Vec<String>,
}

pub trait MemoryRecord: Serialize + DeserializeOwned + Send + Sync + 'static {
    const KIND: StoreKind;
    fn key_vec(&self) -> &EmbeddingVector;
}

impl MemoryRecord for SolutionEntry {
    const KIND: StoreKind = StoreKind::Solution;
    fn key_vec(&self) -> &EmbeddingVector {
        &self.key_vec
    }
}

impl MemoryRecord for DebugEntry {
    const KIND: StoreKind = StoreKind::Debug;
    fn key_vec(&self) -> &EmbeddingVector {
        &self.key_vec
    }
}

impl MemoryRecord for DebateEntry {
    const KIND: StoreKind = StoreKind::Debate;
    fn key_vec(&self) -> &EmbeddingVector {
        &self.key_vec
    }
}

/// Indices of the top `n` keys by cosine similarity to `query`, best first;
/// equal scores keep insertion order.
pub fn rank<'a>(query: &EmbeddingVector, keys: impl IntoIterator<Item = &'a EmbeddingVector>, n: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = keys.into_iter().map(|k| query.cosine(k)).enumerate().collect();
    let order = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if n == 0 {
        return Vec::new();
    }
    if n < scored.len() {
        scored.select_nth_unstable_by(n - 1, order);
        scored.truncate(n);
    }
    scored.sort_by(order);
    scored.into_iter().map(|(i, _)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LoadReport {
    pub loaded: usize,
    pub corrupt: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: u32,
    dim: usize,
}

/// One append-only store.
pub struct Store<E> {
    entries: RwLock<Vec<Arc<E>>>,
    path: Option<PathBuf>,
    dim: usize,
    writer: Mutex<()>,
}

impl<E: MemoryRecord> Store<E> {
    pub fn in_memory(dim: usize) -> Self {
        Self { entries: RwLock::new(Vec::new()), path: None, dim, writer: Mutex::new(()) }
    }

    /// Opens (or prepares) the store file. Corrupt lines are skipped.
    pub fn open(path: impl Into<PathBuf>, dim: usize) -> Result<(Self, LoadReport), MemoryError> {
        let path = path.into();
        let mut report = LoadReport::default();
        let mut entries = Vec::new();
        if path.exists() {
            let io = |e: std::io::Error| MemoryError::Io { path: path.clone(), message: e.to_string() };
            let file = File::open(&path).map_err(io)?;
            let mut header_seen = false;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                if !header_seen {
                    header_seen = true;
                    if let Ok(header) = serde_json::from_str::<Header>(&line) {
                        if header.schema != SCHEMA_VERSION {
                            return Err(MemoryError::Schema { path, found: header.schema });
                        }
                        if header.dim != dim {
                            return Err(MemoryError::DimensionMismatch { path, expected: dim, found: header.dim });
                        }
                        continue;
                    }
                    tracing::warn!(path = %path.display(), "store has no header line");
                }
                match serde_json::from_str::<E>(&line) {
                    Ok(entry) if entry.key_vec().dim() == dim => entries.push(Arc::new(entry)),
                    Ok(_) => {
                        report.corrupt += 1;
                        tracing::warn!(path = %path.display(), line = lineno + 1, "skipping entry with wrong dimension");
                    }
                    Err(e) => {
                        report.corrupt += 1;
                        tracing::warn!(path = %path.display(), line = lineno + 1, error = %e, "skipping corrupt line");
                    }
                }
            }
        }
        report.loaded = entries.len();
        Ok((Self { entries: RwLock::new(entries), path: Some(path), dim, writer: Mutex::new(()) }, report))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<Arc<E>> {
        self.entries.read().expect("store lock").clone()
    }

    pub fn top_n(&self, query: &EmbeddingVector, n: usize) -> Vec<Arc<E>> {
        let entries = self.entries.read().expect("store lock");
        rank(query, entries.iter().map(|e| e.key_vec()), n).into_iter().map(|i| entries[i].clone()).collect()
    }

    /// Persists then publishes the entry.
    pub fn append(&self, entry: E) -> Result<Arc<E>, MemoryError> {
        if entry.key_vec().dim() != self.dim {
            return Err(MemoryError::Precondition(format!(
                "key dimension {} differs from store dimension {}",
                entry.key_vec().dim(),
                self.dim
            )));
        }
        let _guard = self.writer.lock().expect("writer lock");
        if let Some(path) = &self.path {
            let io = |e: std::io::Error| MemoryError::Io { path: path.clone(), message: e.to_string() };
            let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
            let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
            let mut buf = String::new();
            if fresh {
                buf.push_str(&serde_json::to_string(&Header { schema: SCHEMA_VERSION, dim: self.dim }).expect("header"));
                buf.push('\n');
            }
            buf.push_str(
                &serde_json::to_string(&entry).map_err(|e| MemoryError::Io { path: path.clone(), message: e.to_string() })?,
            );
            buf.push('\n');
            file.write_all(buf.as_bytes()).map_err(io)?;
        }
        let entry = Arc::new(entry);
        self.entries.write().expect("store lock").push(entry.clone());
        Ok(entry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MemoryEvent {
    Retrieve { store: StoreKind, n: usize, returned: usize },
    Write { store: StoreKind },
    Llm { purpose: String, ok: bool },
    MalformedSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemorySettings {
    /// Backend used for signatures, diagnoses and summaries.
    pub backend_id: String,
    pub signature_char_budget: usize,
    /// Lane for write-back completions.
    pub lane: String,
}

impl MemorySettings {
    pub fn new(backend_id: impl Into<String>) -> Self {
        Self { backend_id: backend_id.into(), signature_char_budget: 400, lane: "memory".into() }
    }
}

/// Structured debate summary; keys mirror the summarizer's JSON contract.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DebateSummary {
    pub summary: String,
    pub mismatch_reason: String,
    pub decisive_argument: String,
    pub guardrails: Vec<String>,
    pub modeling_patterns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryOutcome {
    pub fields: DebateSummary,
    /// True when the summarizer failed twice and a deterministic summary was used.
    pub degraded: bool,
}

/// Facts about a finished debate that gate debate-memory writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DebateGate {
    pub initial_trigger: bool,
    pub verdict: Verdict,
}

pub struct MemoryBank {
    gateway: Arc<Gateway>,
    settings: MemorySettings,
    dim: usize,
    dir: Option<PathBuf>,
    solutions: Store<SolutionEntry>,
    debug: Store<DebugEntry>,
    debate: Store<DebateEntry>,
    call_log: Mutex<Vec<MemoryEvent>>,
}

impl fmt::Debug for MemoryBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemoryBank")
            .field("dim", &self.dim)
            .field("dir", &self.dir)
            .field("solutions", &self.solutions.len())
            .field("debug", &self.debug.len())
            .field("debate", &self.debate.len())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BankLoadReport {
    pub solution: LoadReport,
    pub debug: LoadReport,
    pub debate: LoadReport,
}

impl BankLoadReport {
    pub fn corrupt(&self) -> usize {
        self.solution.corrupt + self.debug.corrupt + self.debate.corrupt
    }
}

impl MemoryBank {
    pub fn in_memory(gateway: Arc<Gateway>, settings: MemorySettings) -> Self {
        let dim = gateway.embedding_dim();
        Self {
            gateway,
            settings,
            dim,
            dir: None,
            solutions: Store::in_memory(dim),
            debug: Store::in_memory(dim),
            debate: Store::in_memory(dim),
            call_log: Mutex::new(Vec::new()),
        }
    }

    /// Opens the three stores under `dir`, creating it if needed.
    pub fn open(
        dir: impl AsRef<Path>,
        gateway: Arc<Gateway>,
        settings: MemorySettings,
    ) -> Result<(Self, BankLoadReport), MemoryError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| MemoryError::Io { path: dir.clone(), message: e.to_string() })?;
        let dim = gateway.embedding_dim();
        let (solutions, sol) = Store::open(dir.join(StoreKind::Solution.file_name()), dim)?;
        let (debug, dbg) = Store::open(dir.join(StoreKind::Debug.file_name()), dim)?;
        let (debate, deb) = Store::open(dir.join(StoreKind::Debate.file_name()), dim)?;
        let bank = Self {
            gateway,
            settings,
            dim,
            dir: Some(dir),
            solutions,
            debug,
            debate,
            call_log: Mutex::new(Vec::new()),
        };
        Ok((bank, BankLoadReport { solution: sol, debug: dbg, debate: deb }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn solutions(&self) -> &Store<SolutionEntry> {
        &self.solutions
    }

    pub fn debug_store(&self) -> &Store<DebugEntry> {
        &self.debug
    }

    pub fn debate_store(&self) -> &Store<DebateEntry> {
        &self.debate
    }

    pub fn call_log(&self) -> Vec<MemoryEvent> {
        self.call_log.lock().expect("log lock").clone()
    }

    fn log(&self, event: MemoryEvent) {
        self.call_log.lock().expect("log lock").push(event);
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, MemoryError> {
        Ok(self.gateway.embed(text)?)
    }

    fn retrieve<E: MemoryRecord>(&self, store: &Store<E>, query_text: &str, n: usize) -> Vec<Arc<E>> {
        let found = match self.gateway.embed(query_text) {
            Ok(q) if n > 0 => store.top_n(&q, n),
            Ok(_) => Vec::new(),
            Err(e) => {
                tracing::warn!(store = %E::KIND, error = %e, "query embedding failed; returning no entries");
                Vec::new()
            }
        };
        self.log(MemoryEvent::Retrieve { store: E::KIND, n, returned: found.len() });
        found
    }

    pub fn retrieve_solutions(&self, query_text: &str, n: usize) -> Vec<Arc<SolutionEntry>> {
        self.retrieve(&self.solutions, query_text, n)
    }

    pub fn retrieve_debug(&self, query_text: &str, n: usize) -> Vec<Arc<DebugEntry>> {
        self.retrieve(&self.debug, query_text, n)
    }

    pub fn retrieve_debate(&self, query_text: &str, n: usize) -> Vec<Arc<DebateEntry>> {
        self.retrieve(&self.debate, query_text, n)
    }

    /// One completion on the memory backend; `None` on any gateway failure.
    fn ask(&self, purpose: &str, lane: &str, messages: Vec<Message>) -> Option<String> {
        let result = self
            .gateway
            .request(&self.settings.backend_id, lane, messages)
            .and_then(|r| self.gateway.complete(&r));
        self.log(MemoryEvent::Llm { purpose: purpose.into(), ok: result.is_ok() });
        match result {
            Ok(resp) => Some(resp.text),
            Err(e) => {
                tracing::warn!(purpose, error = %e, "memory completion failed; using fallback");
                None
            }
        }
    }

    pub fn write_solution(&self, problem: &ProblemInstance, candidate: &CandidateSolution) -> Result<Arc<SolutionEntry>, MemoryError> {
        let Objective::Value(objective) = candidate.objective else {
            return Err(MemoryError::Precondition("only solved candidates enter solution memory".into()));
        };
        let entry = SolutionEntry {
            key_text: problem.description.clone(),
            key_vec: self.embed(&problem.description)?,
            formulation: candidate.formulation.clone(),
            code: candidate.code.clone(),
            objective,
            source_instance: problem.id.clone(),
        };
        let entry = self.solutions.append(entry)?;
        self.log(MemoryEvent::Write { store: StoreKind::Solution });
        Ok(entry)
    }

    /// Short retrieval key for a failed run; falls back to the exception
    /// line and first traceback frame when the LLM is unavailable.
    pub fn error_signature(
        &self,
        problem: &ProblemInstance,
        formulation: &str,
        code: &str,
        log: &ExecutionFeedback,
        lane: &str,
    ) -> Result<String, MemoryError> {
        if log.is_solved() {
            return Err(MemoryError::Precondition("error signature requested for a solved run".into()));
        }
        let budget = self.settings.signature_char_budget;
        let prompt = Template::ErrorSignature
            .render(&[
                ("char_budget", &budget.to_string()),
                ("problem", &problem.description),
                ("formulation", formulation),
                ("code", code),
                ("exec_status", log.status.as_str()),
                ("stderr", &excerpt_tail(&log.stderr, 2000)),
            ])
            .expect("signature template variables are complete");
        let answer = self.ask("error_signature", lane, vec![Message::user(prompt)]);
        let line = answer
            .as_deref()
            .and_then(|t| t.lines().map(str::trim).find(|l| !l.is_empty()))
            .map(|l| l.chars().take(budget).collect::<String>());
        Ok(line.unwrap_or_else(|| fallback_signature(log).chars().take(budget).collect()))
    }

    pub fn write_debug(
        &self,
        problem: &ProblemInstance,
        episode: &RepairEpisode,
    ) -> Result<Arc<DebugEntry>, MemoryError> {
        if !episode.fixed_log.is_solved() || episode.failed_log.is_solved() {
            return Err(MemoryError::Precondition("debug memory needs a failed run that was fixed".into()));
        }
        let lane = self.settings.lane.clone();
        let signature = match episode.signature.as_deref().filter(|s| !s.trim().is_empty()) {
            Some(s) => s.to_string(),
            None => self.error_signature(problem, &episode.formulation, &episode.failed_code, &episode.failed_log, &lane)?,
        };
        let prompt = Template::DebugDiagnosis
            .render(&[
                ("problem", &problem.description),
                ("formulation", &episode.formulation),
                ("failed_code", &episode.failed_code),
                ("exec_status", episode.failed_log.status.as_str()),
                ("stderr", &excerpt_tail(&episode.failed_log.stderr, 2000)),
                ("fixed_code", &episode.fixed_code),
            ])
            .expect("diagnosis template variables are complete");
        let parsed = self.ask("debug_diagnosis", &lane, vec![Message::user(prompt)]).and_then(|text| {
            let diagnosis = extract_blocks(&text, "diagnosis").ok()?.swap_remove(0);
            let fix = extract_blocks(&text, "fix").ok()?.swap_remove(0);
            Some((diagnosis, fix))
        });
        let (diagnosis, fix) = parsed.unwrap_or_else(|| {
            (excerpt_tail(&episode.failed_log.stderr, 1000), unified_diff(&episode.failed_code, &episode.fixed_code))
        });
        let mut log = episode.failed_log.clone();
        log.stdout = excerpt_tail(&log.stdout, LOG_EXCERPT_CHARS);
        log.stderr = excerpt_tail(&log.stderr, LOG_EXCERPT_CHARS);
        let entry = DebugEntry { key_vec: self.embed(&signature)?, key_text: signature, log, diagnosis, fix };
        let entry = self.debug.append(entry)?;
        self.log(MemoryEvent::Write { store: StoreKind::Debug });
        Ok(entry)
    }

    /// Natural-language description of how two candidates disagree.
    pub fn describe_discrepancy(
        &self,
        problem: &ProblemInstance,
        a: &CandidateSolution,
        b: &CandidateSolution,
        lane: &str,
    ) -> String {
        let (result_a, result_b) = (a.outcome_line(), b.outcome_line());
        let prompt = Template::Discrepancy
            .render(&[
                ("problem", &problem.description),
                ("result_a", &result_a),
                ("formulation_a", &a.formulation),
                ("result_b", &result_b),
                ("formulation_b", &b.formulation),
            ])
            .expect("discrepancy template variables are complete");
        self.ask("discrepancy", lane, vec![Message::user(prompt)])
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .unwrap_or_else(|| fallback_discrepancy(a, b))
    }

    pub fn summarize_debate(
        &self,
        problem: &ProblemInstance,
        initial_a: &CandidateSolution,
        initial_b: &CandidateSolution,
        transcript: &[TranscriptRecord],
        final_objective: f64,
    ) -> SummaryOutcome {
        let history = render_history(transcript);
        let (a_result, b_result) = (initial_a.outcome_line(), initial_b.outcome_line());
        let prompt = Template::DebateSummarizer
            .render(&[
                ("description", &problem.description),
                ("initial_A_result", &a_result),
                ("initial_B_result", &b_result),
                ("history_text", &history),
                ("final_result", &final_objective.to_string()),
            ])
            .expect("summarizer template variables are complete");
        let lane = self.settings.lane.clone();
        let mut messages = vec![Message::user(prompt)];
        for attempt in 0..2 {
            let Some(text) = self.ask("debate_summary", &lane, messages.clone()) else { break };
            if let Some(fields) = parse_summary(&text) {
                return SummaryOutcome { fields, degraded: false };
            }
            if attempt == 0 {
                messages.push(Message::assistant(text));
                messages.push(Message::user(
                    "Return a JSON object with exactly the keys \"summary\", \"mismatch_reason\", \
                     \"decisive_argument\", \"guardrails\" (array), \"modeling_patterns\" (array). JSON ONLY.",
                ));
            }
        }
        tracing::warn!(instance = %problem.id, "malformed debate summary; storing degraded entry");
        self.log(MemoryEvent::MalformedSummary);
        SummaryOutcome {
            fields: DebateSummary { summary: round_deltas(transcript), ..DebateSummary::default() },
            degraded: true,
        }
    }

    pub fn write_debate(
        &self,
        problem: &ProblemInstance,
        discrepancy: &str,
        transcript: &[TranscriptRecord],
        summary: DebateSummary,
        gate: DebateGate,
    ) -> Result<Arc<DebateEntry>, MemoryError> {
        if !gate.initial_trigger {
            return Err(MemoryError::Precondition("debate memory needs an initial disagreement".into()));
        }
        if gate.verdict != Verdict::Consensus {
            return Err(MemoryError::Precondition("debate memory needs a consensus verdict".into()));
        }
        let key_text = debate_key(&problem.description, discrepancy);
        let entry = DebateEntry {
            key_vec: self.embed(&key_text)?,
            key_text,
            transcript: transcript.to_vec(),
            summary: summary.summary,
            mismatch_reason: summary.mismatch_reason,
            decisive_argument: summary.decisive_argument,
            guardrails: summary.guardrails,
            modeling_patterns: summary.modeling_patterns,
        };
        let entry = self.debate.append(entry)?;
        self.log(MemoryEvent::Write { store: StoreKind::Debate });
        Ok(entry)
    }
}

pub fn debate_key(description: &str, discrepancy: &str) -> String {
    format!("{description}{DISAGREEMENT_SEPARATOR}{discrepancy}")
}

fn parse_summary(text: &str) -> Option<DebateSummary> {
    let value: serde_json::Value = serde_json::from_str(outermost_json(text)?).ok()?;
    let obj = value.as_object()?;
    let string = |k: &str| obj.get(k)?.as_str().map(str::to_string);
    let list = |k: &str| -> Option<Vec<String>> {
        obj.get(k)?.as_array()?.iter().map(|v| v.as_str().map(str::to_string)).collect()
    };
    Some(DebateSummary {
        summary: string("summary")?,
        mismatch_reason: string("mismatch_reason")?,
        decisive_argument: string("decisive_argument")?,
        guardrails: list("guardrails")?,
        modeling_patterns: list("modeling_patterns")?,
    })
}

pub fn render_history(transcript: &[TranscriptRecord]) -> String {
    transcript
        .iter()
        .map(|r| {
            let note = if r.carried_forward { " (no revision, previous candidate kept)" } else { "" };
            format!(
                "Round {} / {}: objective {} [{}]{note}\nFormulation:\n{}",
                r.round, r.team_id, r.objective, r.status, r.formulation
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Deterministic per-round objective movements, e.g.
/// `Round 1: team-a 68.06 -> 78; team-b 78 -> 68.06`.
pub fn round_deltas(transcript: &[TranscriptRecord]) -> String {
    let mut rounds: Vec<String> = Vec::new();
    let max_round = transcript.iter().map(|r| r.round).max().unwrap_or(0);
    for round in 1..=max_round {
        let parts: Vec<String> = transcript
            .iter()
            .filter(|r| r.round == round)
            .map(|r| {
                let before = transcript
                    .iter()
                    .filter(|p| p.team_id == r.team_id && p.round + 1 == round)
                    .map(|p| p.objective.to_string())
                    .next()
                    .unwrap_or_else(|| "?".into());
                format!("{} {before} -> {}", r.team_id, r.objective)
            })
            .collect();
        rounds.push(format!("Round {round}: {}", parts.join("; ")));
    }
    rounds.join(". ")
}

pub fn fallback_discrepancy(a: &CandidateSolution, b: &CandidateSolution) -> String {
    let differing = a
        .formulation
        .lines()
        .zip(b.formulation.lines())
        .find(|(x, y)| x.trim() != y.trim())
        .map(|(x, _)| x.trim().to_string())
        .or_else(|| {
            let (la, lb) = (a.formulation.lines().count(), b.formulation.lines().count());
            (la != lb).then(|| format!("line {}", la.min(lb) + 1))
        })
        .unwrap_or_else(|| "no line".to_string());
    format!("team A: {}; team B: {}; formulations differ in {differing}", a.objective, b.objective)
}

pub fn fallback_signature(log: &ExecutionFeedback) -> String {
    let exception = Regex::new(r"^([A-Za-z_][\w.]*(?:Error|Exception|Exit|Interrupt))\b").expect("static regex");
    let exception_line = log.stderr.lines().rev().map(str::trim).find(|l| exception.is_match(l));
    let first_frame = log.stderr.lines().map(str::trim).find(|l| l.starts_with("File \""));
    match (exception_line, first_frame) {
        (Some(exc), Some(frame)) => format!("{exc} | {frame}"),
        (Some(exc), None) => exc.to_string(),
        _ => {
            let last = log.stderr.lines().rev().map(str::trim).find(|l| !l.is_empty()).unwrap_or("no error output");
            format!("{}: {last}", log.status)
        }
    }
}

fn excerpt_tail(text: &str, max_chars: usize) -> String {
    let count = text.chars().count();
    if count <= max_chars {
        return text.to_string();
    }
    text.chars().skip(count - max_chars).collect()
}

pub(crate) fn unified_diff(old: &str, new: &str) -> String {
    similar::TextDiff::from_lines(old, new).unified_diff().header("failed", "fixed").to_string()
}
