//! End-to-end solving: two teams, one debate, memory write-back, and
//! benchmark runs with bounded instance parallelism.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::benchmark::{evaluate_answer_with, BenchError, Benchmark, EvaluationReport, InstanceReport, Tolerances};
use crate::debate::{Debate, DebateConfig, DebateError, DebateOutcome, DebateState, Verdict};
use crate::executor::{ExecutionFeedback, Objective};
use crate::memory::{MemoryBank, MemoryError};
use crate::team::{AgentTeam, CandidateSolution, ProblemInstance, TeamRun};

/// When memory writes produced by an instance become visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WriteBack {
    /// Right after each instance; later instances may retrieve them.
    #[default]
    Online,
    /// After the whole run, in instance order.
    Offline,
    Disabled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub parallelism: usize,
    pub write_back: WriteBack,
    pub tolerances: Tolerances,
    /// Re-run the final code with this timeout and score the fresh objective.
    pub reverify: Option<Duration>,
    /// Directory for per-instance transcript JSON files.
    pub transcript_dir: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            parallelism: 1,
            write_back: WriteBack::Online,
            tolerances: Tolerances::default(),
            reverify: None,
            transcript_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    pub problem: ProblemInstance,
    pub runs: [TeamRun; 2],
    pub outcome: DebateOutcome,
}

impl InstanceResult {
    pub fn state(&self) -> &DebateState {
        &self.outcome.state
    }

    pub fn final_objective(&self) -> Objective {
        self.outcome.state.final_objective()
    }
}

pub struct Orchestrator {
    pub team_a: AgentTeam,
    pub team_b: AgentTeam,
    pub debate: DebateConfig,
    /// Bank used for coordinator-level completions (disagreement descriptions).
    pub memory: Option<Arc<MemoryBank>>,
}

impl Orchestrator {
    pub fn new(team_a: AgentTeam, team_b: AgentTeam, debate: DebateConfig, memory: Option<Arc<MemoryBank>>) -> Self {
        Self { team_a, team_b, debate, memory }
    }

    fn debate(&self) -> Debate<'_> {
        Debate { config: self.debate, team_a: &self.team_a, team_b: &self.team_b, memory: self.memory.as_deref() }
    }

    /// Generates both candidates concurrently and debates them. Never fails
    /// per instance: a protocol error yields a FAILURE final candidate.
    pub fn solve_instance(&self, problem: &ProblemInstance) -> InstanceResult {
        let (run_a, run_b) = std::thread::scope(|s| {
            let a = s.spawn(|| self.team_a.generate_candidate(problem));
            let b = s.spawn(|| self.team_b.generate_candidate(problem));
            (a.join().expect("team A panicked"), b.join().expect("team B panicked"))
        });
        let outcome = match self.debate().run(problem, run_a.candidate.clone(), run_b.candidate.clone()) {
            Ok(outcome) => outcome,
            Err(e) => protocol_failure(&run_a.candidate, &run_b.candidate, self.debate.tolerance, e),
        };
        InstanceResult { problem: problem.clone(), runs: [run_a, run_b], outcome }
    }

    /// Distinct banks the teams read from, team A's first.
    fn team_banks(&self) -> Vec<&MemoryBank> {
        let mut banks: Vec<&MemoryBank> = Vec::new();
        for bank in [self.team_a.memory(), self.team_b.memory()].into_iter().flatten() {
            if !banks.iter().any(|b| std::ptr::eq(*b, bank)) {
                banks.push(bank);
            }
        }
        banks
    }

    /// Applies the instance's solution, debug and debate writes. Failures are
    /// logged and returned; they never abort a run.
    pub fn write_back(&self, result: &InstanceResult) -> Vec<MemoryError> {
        let mut errors = Vec::new();
        let mut record = |r: Result<_, MemoryError>| {
            if let Err(e) = r {
                tracing::warn!(instance = %result.problem.id, error = %e, "memory write-back failed");
                errors.push(e);
            }
        };
        let banks = self.team_banks();
        if let Some(final_candidate) = &result.outcome.state.final_candidate {
            if !final_candidate.objective.is_failure() {
                for bank in &banks {
                    record(bank.write_solution(&result.problem, final_candidate).map(drop));
                }
            }
        }
        for (team, run) in [&self.team_a, &self.team_b].into_iter().zip(&result.runs) {
            if let Some(bank) = team.memory() {
                for episode in &run.repairs {
                    record(bank.write_debug(&result.problem, episode).map(drop));
                }
            }
        }
        if let Some(pending) = &result.outcome.pending_write {
            for bank in &banks {
                record(pending.commit(bank).map(drop));
            }
        }
        errors
    }

    /// Runs every instance with at most `parallelism` in flight. The report
    /// keeps benchmark order whatever the completion order.
    pub fn run_benchmark(&self, benchmark: &Benchmark, settings: &RunSettings) -> Result<EvaluationReport, BenchError> {
        if settings.parallelism == 0 {
            return Err(BenchError::InvalidSettings("parallelism must be at least 1".into()));
        }
        benchmark.require_ground_truth()?;
        if let Some(dir) = &settings.transcript_dir {
            std::fs::create_dir_all(dir).map_err(|e| BenchError::Io { path: dir.clone(), message: e.to_string() })?;
        }
        let n = benchmark.instances.len();
        let slots: Mutex<Vec<Option<InstanceReport>>> = Mutex::new(vec![None; n]);
        let finished: Mutex<Vec<Option<InstanceResult>>> = Mutex::new(Vec::new());
        if settings.write_back == WriteBack::Offline {
            finished.lock().expect("results lock").resize_with(n, || None);
        }
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..settings.parallelism.min(n.max(1)) {
                s.spawn(|| loop {
                    let idx = next.fetch_add(1, Ordering::SeqCst);
                    let Some(problem) = benchmark.instances.get(idx) else { break };
                    let result = self.solve_instance(problem);
                    let row = self.score(&result, settings);
                    if let Some(dir) = &settings.transcript_dir {
                        let path = dir.join(format!("{}.json", sanitize(&problem.id)));
                        let doc = serde_json::to_string_pretty(&result.state().export(&problem.id)).expect("json");
                        if let Err(e) = std::fs::write(&path, doc) {
                            tracing::warn!(path = %path.display(), error = %e, "could not write transcript");
                        }
                    }
                    match settings.write_back {
                        WriteBack::Online => {
                            self.write_back(&result);
                        }
                        WriteBack::Offline => finished.lock().expect("results lock")[idx] = Some(result),
                        WriteBack::Disabled => {}
                    }
                    slots.lock().expect("slots lock")[idx] = Some(row);
                });
            }
        });
        for result in finished.into_inner().expect("results lock").into_iter().flatten() {
            self.write_back(&result);
        }
        let rows = slots.into_inner().expect("slots lock").into_iter().map(|r| r.expect("every instance ran")).collect();
        Ok(EvaluationReport::from_instances(rows))
    }

    fn score(&self, result: &InstanceResult, settings: &RunSettings) -> InstanceReport {
        let state = result.state();
        let mut objective = state.final_objective();
        if let (Some(timeout), Some(final_candidate)) = (settings.reverify, &state.final_candidate) {
            if !final_candidate.code.trim().is_empty() {
                let fresh = self.team_a.executor().run_code(&final_candidate.code, timeout);
                if fresh.objective != objective {
                    tracing::warn!(
                        instance = %result.problem.id,
                        recorded = %objective,
                        reverified = %fresh.objective,
                        "re-verification changed the objective"
                    );
                }
                objective = fresh.objective;
            }
        }
        let ground_truth = result.problem.ground_truth.expect("checked before the run");
        InstanceReport {
            id: result.problem.id.clone(),
            benchmark: result.problem.benchmark.clone(),
            final_objective: objective,
            ground_truth,
            verdict: evaluate_answer_with(objective, ground_truth, settings.tolerances),
            debate_verdict: state.verdict.unwrap_or(Verdict::Fallback),
            rounds_used: state.round,
        }
    }
}

fn protocol_failure(a: &CandidateSolution, b: &CandidateSolution, tolerance: f64, error: DebateError) -> DebateOutcome {
    tracing::error!(%error, "debate protocol failed");
    let mut state = DebateState::new(a.clone(), b.clone(), tolerance);
    let mut failed = a.clone();
    failed.objective = Objective::Failure;
    failed.feedback = ExecutionFeedback::aborted(format!("debate failed: {error}"));
    state.final_candidate = Some(failed);
    state.verdict = Some(Verdict::Fallback);
    DebateOutcome { state, pending_write: None }
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' }).collect()
}
