//! One agent team: Formulator -> Programmer -> (Executor <-> Debugger).

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{Execution, ExecutionFeedback, Executor, Objective};
use crate::gateway::{ChatRequest, Gateway, GatewayError, Message};
use crate::memory::{DebugEntry, MemoryBank, SolutionEntry};
use crate::prompts::{extract_blocks, BlockError, PromptError, Template};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub ground_truth: Option<f64>,
    #[serde(default)]
    pub benchmark: String,
}

impl ProblemInstance {
    pub fn new(id: impl Into<String>, description: impl Into<String>) -> Self {
        Self { id: id.into(), description: description.into(), ground_truth: None, benchmark: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub formulation: String,
    pub code: String,
    pub objective: Objective,
    pub feedback: ExecutionFeedback,
    pub team_id: String,
    pub debug_attempts: u32,
}

impl CandidateSolution {
    /// One-line outcome used in debate prompts and summaries.
    pub fn outcome_line(&self) -> String {
        match self.objective {
            Objective::Value(v) => format!("solved, objective = {v}"),
            Objective::Failure => {
                let tail = self.feedback.stderr.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
                if tail.is_empty() {
                    format!("failed ({})", self.feedback.status)
                } else {
                    format!("failed ({}): {}", self.feedback.status, tail.trim())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalCounts {
    pub solution: usize,
    pub debug: usize,
    pub debate: usize,
}

impl Default for RetrievalCounts {
    fn default() -> Self {
        Self { solution: 4, debug: 3, debate: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamConfig {
    pub team_id: String,
    pub backend_id: String,
    pub retry_budget: u32,
    pub exec_timeout: Duration,
    pub memory_enabled: bool,
    pub retrieval_counts: RetrievalCounts,
    /// Per-entry character budget for memory text injected into prompts.
    pub entry_char_budget: usize,
}

impl TeamConfig {
    pub fn new(team_id: impl Into<String>, backend_id: impl Into<String>) -> Self {
        Self {
            team_id: team_id.into(),
            backend_id: backend_id.into(),
            retry_budget: 3,
            exec_timeout: Duration::from_secs(120),
            memory_enabled: true,
            retrieval_counts: RetrievalCounts::default(),
            entry_char_budget: 4000,
        }
    }

    pub fn validate(&self) -> Result<(), TeamError> {
        if self.retry_budget < 1 {
            return Err(TeamError::InvalidConfig("retry_budget must be at least 1".into()));
        }
        if self.exec_timeout.is_zero() {
            return Err(TeamError::InvalidConfig("exec_timeout must be positive".into()));
        }
        if self.team_id.trim().is_empty() {
            return Err(TeamError::InvalidConfig("team_id must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Formulate,
    Program,
    Debug,
    Analysis,
    Debate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Formulate => "formulate",
            Stage::Program => "program",
            Stage::Debug => "debug",
            Stage::Analysis => "retrieval analysis",
            Stage::Debate => "debate",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeamError {
    #[error("{stage}: completion had no usable block after one re-prompt ({source})")]
    MissingBlock { stage: Stage, source: BlockError },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid team config: {0}")]
    InvalidConfig(String),
}

/// A failed run that the debugger repaired; input for debug-memory write-back.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairEpisode {
    pub formulation: String,
    pub failed_code: String,
    pub failed_log: ExecutionFeedback,
    pub fixed_code: String,
    pub fixed_log: ExecutionFeedback,
    /// Signature computed for the failed run while debugging, if any.
    pub signature: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamRun {
    pub candidate: CandidateSolution,
    pub repairs: Vec<RepairEpisode>,
}

/// Parsed blocks of one completion, in the order requested.
struct Blocks {
    bodies: Vec<String>,
    warnings: Vec<String>,
}

pub struct AgentTeam {
    config: TeamConfig,
    gateway: Arc<Gateway>,
    executor: Arc<Executor>,
    memory: Option<Arc<MemoryBank>>,
}

impl fmt::Debug for AgentTeam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentTeam").field("config", &self.config).finish()
    }
}

impl AgentTeam {
    pub fn new(
        config: TeamConfig,
        gateway: Arc<Gateway>,
        executor: Arc<Executor>,
        memory: Option<Arc<MemoryBank>>,
    ) -> Result<Self, TeamError> {
        config.validate()?;
        if !gateway.has_backend(&config.backend_id) {
            return Err(GatewayError::UnknownBackend(config.backend_id.clone()).into());
        }
        Ok(Self { config, gateway, executor, memory })
    }

    pub fn config(&self) -> &TeamConfig {
        &self.config
    }

    pub fn id(&self) -> &str {
        &self.config.team_id
    }

    pub fn executor(&self) -> &Executor {
        &self.executor
    }

    /// Memory bank, only when this team is configured to use it.
    pub fn memory(&self) -> Option<&MemoryBank> {
        self.memory.as_deref().filter(|_| self.config.memory_enabled)
    }

    fn request(&self, prompt: String) -> Result<ChatRequest, TeamError> {
        Ok(self.gateway.request(&self.config.backend_id, &self.config.team_id, vec![Message::user(prompt)])?)
    }

    pub fn formulate_request(&self, problem: &ProblemInstance, memory_context: &str) -> Result<ChatRequest, TeamError> {
        let prompt = Template::Formulator
            .render(&[("solution_memory", or_none(memory_context)), ("problem", &problem.description)])?;
        self.request(prompt)
    }

    pub fn program_request(
        &self,
        problem: &ProblemInstance,
        formulation: &str,
        memory_context: &str,
    ) -> Result<ChatRequest, TeamError> {
        let prompt = Template::Programmer.render(&[
            ("solution_memory", or_none(memory_context)),
            ("problem", &problem.description),
            ("formulation", formulation),
        ])?;
        self.request(prompt)
    }

    pub fn debug_request(
        &self,
        problem: &ProblemInstance,
        formulation: &str,
        code: &str,
        feedback: &ExecutionFeedback,
        memory_context: &str,
    ) -> Result<ChatRequest, TeamError> {
        let flag = feedback.solver_flag();
        let prompt = Template::Debugger.render(&[
            ("problem", &problem.description),
            ("formulation", formulation),
            ("current_code", code),
            ("exec_status", feedback.status.as_str()),
            ("solver_flag", &flag),
            ("stderr", or_none(&feedback.stderr)),
            ("debug_memory", or_none(memory_context)),
        ])?;
        self.request(prompt)
    }

    pub fn debate_request(
        &self,
        problem: &ProblemInstance,
        own: &CandidateSolution,
        peer: &CandidateSolution,
        debate_memory: &str,
    ) -> Result<ChatRequest, TeamError> {
        let (mine, theirs) = (own.outcome_line(), peer.outcome_line());
        let prompt = Template::Debate.render(&[
            ("problem", &problem.description),
            ("my_formulation", &own.formulation),
            ("my_code", &own.code),
            ("my_result", &mine),
            ("other_formulation", &peer.formulation),
            ("other_code", &peer.code),
            ("other_result", &theirs),
            ("debate_memory", or_none(debate_memory)),
        ])?;
        self.request(prompt)
    }

    /// Sends `request`, re-prompting once if any of `tags` is missing.
    fn complete_blocks(&self, stage: Stage, request: ChatRequest, tags: &[&str]) -> Result<Blocks, TeamError> {
        let first = self.gateway.complete(&request)?;
        let failure = match parse_blocks(&first.text, tags) {
            Ok(blocks) => return Ok(blocks),
            Err(e) => e,
        };
        tracing::warn!(team = %self.config.team_id, %stage, error = %failure, "malformed completion, re-prompting");
        let block_list = tags.iter().map(|t| format!("<{t}>...</{t}>")).collect::<Vec<_>>().join(" then ");
        let reminder = Template::Reminder.render(&[("blocks", &block_list)])?;
        let mut retry = request;
        retry.messages.push(Message::assistant(first.text));
        retry.messages.push(Message::user(reminder));
        let second = self.gateway.complete(&retry)?;
        parse_blocks(&second.text, tags).map_err(|source| TeamError::MissingBlock { stage, source })
    }

    pub fn formulate(&self, problem: &ProblemInstance, memory_context: &str) -> Result<String, TeamError> {
        if problem.description.trim().is_empty() {
            return Err(TeamError::Precondition("problem description is empty".into()));
        }
        let request = self.formulate_request(problem, memory_context)?;
        Ok(self.complete_blocks(Stage::Formulate, request, &["formulation"])?.bodies.remove(0))
    }

    /// Returns the code and any parser warnings.
    pub fn program(
        &self,
        problem: &ProblemInstance,
        formulation: &str,
        memory_context: &str,
    ) -> Result<(String, Vec<String>), TeamError> {
        if formulation.trim().is_empty() {
            return Err(TeamError::Precondition("formulation is empty".into()));
        }
        let request = self.program_request(problem, formulation, memory_context)?;
        let mut blocks = self.complete_blocks(Stage::Program, request, &["python"])?;
        Ok((blocks.bodies.remove(0), blocks.warnings))
    }

    pub fn debug(
        &self,
        problem: &ProblemInstance,
        formulation: &str,
        code: &str,
        feedback: &ExecutionFeedback,
        memory_context: &str,
    ) -> Result<(String, Vec<String>), TeamError> {
        if feedback.is_solved() {
            return Err(TeamError::Precondition("debug called on a solved run".into()));
        }
        let request = self.debug_request(problem, formulation, code, feedback, memory_context)?;
        let mut blocks = self.complete_blocks(Stage::Debug, request, &["python"])?;
        Ok((blocks.bodies.remove(0), blocks.warnings))
    }

    /// Debate revision: returns (formulation, code, warnings).
    pub fn revise(
        &self,
        problem: &ProblemInstance,
        own: &CandidateSolution,
        peer: &CandidateSolution,
        debate_memory: &str,
    ) -> Result<(String, String, Vec<String>), TeamError> {
        let request = self.debate_request(problem, own, peer, debate_memory)?;
        let mut blocks = self.complete_blocks(Stage::Debate, request, &["formulation", "python"])?;
        let code = blocks.bodies.pop().expect("two tags requested");
        let formulation = blocks.bodies.pop().expect("two tags requested");
        Ok((formulation, code, blocks.warnings))
    }

    pub fn execute(&self, code: &str) -> Execution {
        self.executor.run_code(code, self.config.exec_timeout)
    }

    /// Memory context shared by the Formulator and Programmer of one run.
    ///
    /// With two or more retrieved cases one extra completion condenses them
    /// into an analysis; otherwise the raw case is injected.
    pub fn solution_context(&self, problem: &ProblemInstance) -> String {
        let Some(memory) = self.memory() else { return String::new() };
        let entries = memory.retrieve_solutions(&problem.description, self.config.retrieval_counts.solution);
        if entries.is_empty() {
            return String::new();
        }
        let cases = format_solution_cases(&entries, self.config.entry_char_budget);
        if entries.len() < 2 {
            return cases;
        }
        let analysis = Template::RetrievalAnalysis
            .render(&[("current_problem_desc", &problem.description), ("full_cases", &cases)])
            .map_err(TeamError::from)
            .and_then(|p| self.request(p))
            .and_then(|r| Ok(self.gateway.complete(&r)?));
        match analysis {
            Ok(resp) if !resp.text.trim().is_empty() => resp.text.trim().to_string(),
            Ok(_) => cases,
            Err(e) => {
                tracing::warn!(team = %self.config.team_id, error = %e, "retrieval analysis failed; injecting raw cases");
                cases
            }
        }
    }

    /// Debug-memory context plus the error signature used as the query.
    pub fn debug_context(
        &self,
        problem: &ProblemInstance,
        formulation: &str,
        code: &str,
        feedback: &ExecutionFeedback,
    ) -> (String, Option<String>) {
        let Some(memory) = self.memory() else { return (String::new(), None) };
        let signature = match memory.error_signature(problem, formulation, code, feedback, &self.config.team_id) {
            Ok(sig) => sig,
            Err(e) => {
                tracing::warn!(error = %e, "error signature unavailable");
                return (String::new(), None);
            }
        };
        let entries = memory.retrieve_debug(&signature, self.config.retrieval_counts.debug);
        (format_debug_entries(&entries, self.config.entry_char_budget), Some(signature))
    }

    /// Full pipeline for one instance. Never fails: a broken pipeline yields
    /// a FAILURE candidate whose feedback explains why.
    pub fn generate_candidate(&self, problem: &ProblemInstance) -> TeamRun {
        let context = self.solution_context(problem);
        let formulation = match self.formulate(problem, &context) {
            Ok(f) => f,
            Err(e) => return self.aborted(String::new(), String::new(), Stage::Formulate, e),
        };
        let (mut code, warnings) = match self.program(problem, &formulation, &context) {
            Ok(out) => out,
            Err(e) => return self.aborted(formulation, String::new(), Stage::Program, e),
        };
        let mut run = self.execute(&code);
        run.feedback.warnings.extend(warnings);

        let mut attempts = 0u32;
        let mut last_failure: Option<(String, ExecutionFeedback, Option<String>)> = None;
        while !run.feedback.is_solved() && attempts < self.config.retry_budget {
            let (context, signature) = self.debug_context(problem, &formulation, &code, &run.feedback);
            match self.debug(problem, &formulation, &code, &run.feedback, &context) {
                Ok((fixed, warnings)) => {
                    attempts += 1;
                    let failed = std::mem::replace(&mut code, fixed);
                    last_failure = Some((failed, run.feedback.clone(), signature));
                    run = self.execute(&code);
                    run.feedback.warnings.extend(warnings);
                }
                Err(e) => {
                    run.feedback.warnings.push(format!("pipeline aborted at debug: {e}"));
                    break;
                }
            }
        }

        let repairs = match (run.feedback.is_solved(), last_failure) {
            (true, Some((failed_code, failed_log, signature))) => vec![RepairEpisode {
                formulation: formulation.clone(),
                failed_code,
                failed_log,
                fixed_code: code.clone(),
                fixed_log: run.feedback.clone(),
                signature,
            }],
            _ => Vec::new(),
        };
        TeamRun {
            candidate: CandidateSolution {
                formulation,
                code,
                objective: run.objective,
                feedback: run.feedback,
                team_id: self.config.team_id.clone(),
                debug_attempts: attempts,
            },
            repairs,
        }
    }

    fn aborted(&self, formulation: String, code: String, stage: Stage, error: TeamError) -> TeamRun {
        tracing::warn!(team = %self.config.team_id, %stage, %error, "team pipeline aborted");
        TeamRun {
            candidate: CandidateSolution {
                formulation,
                code,
                objective: Objective::Failure,
                feedback: ExecutionFeedback::aborted(format!("pipeline aborted at {stage}: {error}")),
                team_id: self.config.team_id.clone(),
                debug_attempts: 0,
            },
            repairs: Vec::new(),
        }
    }
}

fn parse_blocks(text: &str, tags: &[&str]) -> Result<Blocks, BlockError> {
    let mut bodies = Vec::with_capacity(tags.len());
    let mut warnings = Vec::new();
    for tag in tags {
        let mut found = extract_blocks(text, tag)?;
        if found.len() > 1 {
            warnings.push(format!("completion contained {} <{tag}> blocks; using the first", found.len()));
        }
        bodies.push(found.swap_remove(0));
    }
    Ok(Blocks { bodies, warnings })
}

fn or_none(text: &str) -> &str {
    if text.trim().is_empty() {
        "(none)"
    } else {
        text
    }
}

pub(crate) fn truncate_chars(text: &str, budget: usize) -> String {
    match text.char_indices().nth(budget) {
        Some((idx, _)) => format!("{}\n[truncated]", &text[..idx]),
        None => text.to_string(),
    }
}

pub fn format_solution_cases(entries: &[Arc<SolutionEntry>], budget: usize) -> String {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let body = format!(
                "Problem: {}\nFormulation:\n{}\nCode:\n{}\nObjective: {}",
                e.key_text, e.formulation, e.code, e.objective
            );
            format!("### Case {}\n{}", i + 1, truncate_chars(&body, budget))
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn format_debug_entries(entries: &[Arc<DebugEntry>], budget: usize) -> String {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let body = format!("Signature: {}\nDiagnosis: {}\nFix: {}", e.key_text, e.diagnosis, e.fix);
            format!("### Past failure {}\n{}", i + 1, truncate_chars(&body, budget))
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}
