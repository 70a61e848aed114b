//! Multi-team optimization modeling engine.
//!
//! Two agent teams, each a Formulator -> Programmer -> Debugger pipeline on
//! its own LLM backend, turn a natural-language problem into solver code. The
//! executor runs that code and reads the objective. If the teams disagree they
//! debate until their objectives agree or the round budget runs out. A memory
//! bank keeps solved cases, repaired failures and resolved debates for
//! retrieval on later problems.

pub mod benchmark;
pub mod config;
pub mod debate;
pub mod executor;
pub mod gateway;
pub mod memory;
pub mod orchestrator;
pub mod prompts;
pub mod team;

pub use benchmark::{
    evaluate_answer, evaluate_answer_with, load_benchmark, AnswerVerdict, BenchError, Benchmark, BenchmarkScore,
    EvaluationReport, InstanceReport, Tolerances,
};
pub use config::{Config, ConfigError, Mode, Runtime};
pub use debate::{
    normalized_levenshtein, pick_consensus, should_trigger, stability_fallback, Debate, DebateConfig, DebateOutcome,
    DebateState, TranscriptRecord, Verdict,
};
pub use executor::{ExecStatus, Execution, ExecutionFeedback, Executor, ExecutorConfig, Objective};
pub use gateway::{ChatRequest, ChatResponse, EmbeddingVector, Gateway, GatewayError, Message};
pub use memory::{DebateEntry, DebugEntry, MemoryBank, MemoryError, MemorySettings, SolutionEntry};
pub use orchestrator::{InstanceResult, Orchestrator, RunSettings, WriteBack};
pub use team::{AgentTeam, CandidateSolution, ProblemInstance, TeamConfig, TeamError};
