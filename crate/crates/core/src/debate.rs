//! Pairwise debate between two agent teams.
//!
//! A debate starts when the initial candidates disagree (either failed, or
//! objectives differ by more than the tolerance). Each round both teams see
//! their own and the peer's candidate, revise, and are re-executed. It stops at
//! consensus or after `max_rounds`, in which case the candidate that changed
//! least over the last round wins.

use std::fmt;
use std::sync::Arc;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::executor::{ExecStatus, Objective};
use crate::memory::{
    debate_key, fallback_discrepancy, unified_diff, DebateEntry, DebateGate, MemoryBank, MemoryError,
};
use crate::team::{truncate_chars, AgentTeam, CandidateSolution, ProblemInstance};

/// Lane used for debate-level completions that belong to neither team.
pub const COORDINATOR_LANE: &str = "coordinator";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebateConfig {
    /// Absolute objective gap above which the teams disagree.
    pub tolerance: f64,
    pub max_rounds: u32,
    pub memory_enabled: bool,
}

impl Default for DebateConfig {
    fn default() -> Self {
        Self { tolerance: 0.05, max_rounds: 3, memory_enabled: true }
    }
}

impl DebateConfig {
    pub fn validate(&self) -> Result<(), DebateError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(DebateError::InvalidConfig(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_rounds < 1 {
            return Err(DebateError::InvalidConfig("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DebateError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid debate config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    NoDebateNeeded,
    Consensus,
    Fallback,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::NoDebateNeeded => "no_debate_needed",
            Verdict::Consensus => "consensus",
            Verdict::Fallback => "fallback",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One team's candidate at one round. Round 0 holds the initial candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub round: u32,
    pub team_id: String,
    pub formulation: String,
    pub code: String,
    pub objective: Objective,
    pub status: ExecStatus,
    /// The team produced no usable revision and kept its previous candidate.
    #[serde(default)]
    pub carried_forward: bool,
    /// Normalized edit distance from the team's previous candidate.
    #[serde(default)]
    pub change: Option<f64>,
}

impl TranscriptRecord {
    fn new(round: u32, candidate: &CandidateSolution, carried_forward: bool, change: Option<f64>) -> Self {
        Self {
            round,
            team_id: candidate.team_id.clone(),
            formulation: candidate.formulation.clone(),
            code: candidate.code.clone(),
            objective: candidate.objective,
            status: candidate.feedback.status,
            carried_forward,
            change,
        }
    }
}

/// The disagreement test.
pub fn should_trigger(a: Objective, b: Objective, tolerance: f64) -> bool {
    match (a, b) {
        (Objective::Value(x), Objective::Value(y)) => (x - y).abs() > tolerance,
        _ => true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Optimization sense declared in a formulation, if exactly one is.
pub fn infer_sense(formulation: &str) -> Option<Sense> {
    let min = Regex::new(r"(?i)\b(minimi[sz]e|minimum|min)\b").expect("static regex");
    let max = Regex::new(r"(?i)\b(maximi[sz]e|maximum|max)\b").expect("static regex");
    match (min.is_match(formulation), max.is_match(formulation)) {
        (true, false) => Some(Sense::Minimize),
        (false, true) => Some(Sense::Maximize),
        _ => None,
    }
}

/// Chooses between two agreeing candidates: the better objective when both
/// formulations declare the same sense, else fewer debug attempts, else A.
pub fn pick_consensus<'a>(
    a: &'a CandidateSolution,
    b: &'a CandidateSolution,
    tolerance: f64,
) -> Result<&'a CandidateSolution, DebateError> {
    let (Objective::Value(va), Objective::Value(vb)) = (a.objective, b.objective) else {
        return Err(DebateError::Precondition("consensus needs two solved candidates".into()));
    };
    if should_trigger(a.objective, b.objective, tolerance) {
        return Err(DebateError::Precondition(format!("objectives {va} and {vb} are not within {tolerance}")));
    }
    let sense = match (infer_sense(&a.formulation), infer_sense(&b.formulation)) {
        (Some(x), Some(y)) if x == y => Some(x),
        _ => None,
    };
    Ok(match sense {
        Some(Sense::Minimize) if vb < va => b,
        Some(Sense::Maximize) if vb > va => b,
        Some(_) => a,
        None if b.debug_attempts < a.debug_attempts => b,
        None => a,
    })
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the longer length, in [0, 1].
pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / longest as f64
}

pub fn change_between(before: &CandidateSolution, after: &CandidateSolution) -> f64 {
    normalized_levenshtein(
        &format!("{}\n{}", before.formulation, before.code),
        &format!("{}\n{}", after.formulation, after.code),
    )
}

/// Last candidate of the team whose candidate changed least over the final
/// round; exact ties go to team A.
pub fn stability_fallback<'a>(
    history_a: &'a [CandidateSolution],
    history_b: &'a [CandidateSolution],
) -> Result<&'a CandidateSolution, DebateError> {
    let last_two = |h: &'a [CandidateSolution]| match h {
        [.., x, y] => Ok((x, y)),
        _ => Err(DebateError::Precondition("stability fallback needs at least one debate round".into())),
    };
    let (a0, a1) = last_two(history_a)?;
    let (b0, b1) = last_two(history_b)?;
    Ok(if change_between(b0, b1) < change_between(a0, a1) { b1 } else { a1 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DebateState {
    pub round: u32,
    pub history_a: Vec<CandidateSolution>,
    pub history_b: Vec<CandidateSolution>,
    pub verdict: Option<Verdict>,
    #[serde(rename = "final")]
    pub final_candidate: Option<CandidateSolution>,
    pub transcript: Vec<TranscriptRecord>,
    /// Whether the initial pair disagreed.
    pub initial_trigger: bool,
    /// Latest disagreement description, refreshed each round when computed.
    pub discrepancy: Option<String>,
    pub initial_discrepancy: Option<String>,
}

impl DebateState {
    pub fn new(a: CandidateSolution, b: CandidateSolution, tolerance: f64) -> Self {
        let initial_trigger = should_trigger(a.objective, b.objective, tolerance);
        let transcript = vec![TranscriptRecord::new(0, &a, false, None), TranscriptRecord::new(0, &b, false, None)];
        Self {
            round: 0,
            history_a: vec![a],
            history_b: vec![b],
            verdict: None,
            final_candidate: None,
            transcript,
            initial_trigger,
            discrepancy: None,
            initial_discrepancy: None,
        }
    }

    pub fn last_a(&self) -> &CandidateSolution {
        self.history_a.last().expect("history starts non-empty")
    }

    pub fn last_b(&self) -> &CandidateSolution {
        self.history_b.last().expect("history starts non-empty")
    }

    pub fn final_objective(&self) -> Objective {
        self.final_candidate.as_ref().map_or(Objective::Failure, |c| c.objective)
    }

    /// Per-instance transcript document: rounds, per-team diffs, objectives, verdict.
    pub fn export(&self, problem_id: &str) -> Value {
        let histories = [&self.history_a, &self.history_b];
        let rounds: Vec<Value> = (0..=self.round)
            .map(|r| {
                let teams: Vec<Value> = self
                    .transcript
                    .iter()
                    .filter(|t| t.round == r)
                    .map(|t| {
                        let history = histories.iter().find(|h| h[0].team_id == t.team_id);
                        let previous = history.and_then(|h| r.checked_sub(1).and_then(|p| h.get(p as usize)));
                        let mut doc = json!({
                            "team": t.team_id,
                            "objective": t.objective,
                            "status": t.status,
                            "carried_forward": t.carried_forward,
                            "change": t.change,
                        });
                        match previous {
                            Some(prev) => {
                                doc["formulation_diff"] = unified_diff(&prev.formulation, &t.formulation).into();
                                doc["code_diff"] = unified_diff(&prev.code, &t.code).into();
                            }
                            None => {
                                doc["formulation"] = t.formulation.clone().into();
                                doc["code"] = t.code.clone().into();
                            }
                        }
                        doc
                    })
                    .collect();
                json!({ "round": r, "teams": teams })
            })
            .collect();
        json!({
            "instance": problem_id,
            "initial_trigger": self.initial_trigger,
            "discrepancy": self.initial_discrepancy,
            "rounds": rounds,
            "verdict": self.verdict,
            "final_objective": self.final_objective(),
            "final_team": self.final_candidate.as_ref().map(|c| c.team_id.clone()),
        })
    }
}

/// Debate-memory write produced by a converged debate, applied by the caller
/// according to its write-back policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingDebateWrite {
    pub problem: ProblemInstance,
    pub discrepancy: String,
    pub initial_a: CandidateSolution,
    pub initial_b: CandidateSolution,
    pub transcript: Vec<TranscriptRecord>,
    pub final_objective: f64,
    pub verdict: Verdict,
}

impl PendingDebateWrite {
    pub fn commit(&self, bank: &MemoryBank) -> Result<Arc<DebateEntry>, MemoryError> {
        let summary =
            bank.summarize_debate(&self.problem, &self.initial_a, &self.initial_b, &self.transcript, self.final_objective);
        bank.write_debate(
            &self.problem,
            &self.discrepancy,
            &self.transcript,
            summary.fields,
            DebateGate { initial_trigger: true, verdict: self.verdict },
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebateOutcome {
    pub state: DebateState,
    pub pending_write: Option<PendingDebateWrite>,
}

pub struct Debate<'a> {
    pub config: DebateConfig,
    pub team_a: &'a AgentTeam,
    pub team_b: &'a AgentTeam,
    /// Bank used for disagreement descriptions; teams retrieve through their own.
    pub memory: Option<&'a MemoryBank>,
}

impl Debate<'_> {
    fn retrieval_enabled(&self) -> bool {
        self.config.memory_enabled && (self.team_a.memory().is_some() || self.team_b.memory().is_some())
    }

    fn describe(&self, problem: &ProblemInstance, a: &CandidateSolution, b: &CandidateSolution) -> String {
        match self.memory {
            Some(bank) => bank.describe_discrepancy(problem, a, b, COORDINATOR_LANE),
            None => fallback_discrepancy(a, b),
        }
    }

    fn debate_context(&self, team: &AgentTeam, problem: &ProblemInstance, discrepancy: Option<&str>) -> String {
        let (Some(bank), Some(delta)) = (team.memory().filter(|_| self.config.memory_enabled), discrepancy) else {
            return String::new();
        };
        let entries = bank.retrieve_debate(&debate_key(&problem.description, delta), team.config().retrieval_counts.debate);
        format_debate_entries(&entries, team.config().entry_char_budget)
    }

    /// One refinement round; both teams revise and execute concurrently.
    pub fn run_round(&self, problem: &ProblemInstance, mut state: DebateState) -> Result<DebateState, DebateError> {
        if state.verdict.is_some() {
            return Err(DebateError::Precondition("debate already finished".into()));
        }
        if state.round >= self.config.max_rounds {
            return Err(DebateError::Precondition("round budget exhausted".into()));
        }
        if self.retrieval_enabled() {
            let delta = match (&state.initial_discrepancy, state.round) {
                (Some(initial), 0) => initial.clone(),
                _ => self.describe(problem, state.last_a(), state.last_b()),
            };
            if state.initial_discrepancy.is_none() {
                state.initial_discrepancy = Some(delta.clone());
            }
            state.discrepancy = Some(delta);
        }
        let delta = state.discrepancy.as_deref();
        let (a, b) = (state.last_a().clone(), state.last_b().clone());
        let ((next_a, kept_a), (next_b, kept_b)) = std::thread::scope(|s| {
            let ja = s.spawn(|| self.revise(self.team_a, problem, &a, &b, delta));
            let jb = s.spawn(|| self.revise(self.team_b, problem, &b, &a, delta));
            (ja.join().expect("team A revision panicked"), jb.join().expect("team B revision panicked"))
        });
        state.round += 1;
        let round = state.round;
        state.transcript.push(TranscriptRecord::new(round, &next_a, kept_a, Some(change_between(&a, &next_a))));
        state.transcript.push(TranscriptRecord::new(round, &next_b, kept_b, Some(change_between(&b, &next_b))));
        tracing::debug!(
            instance = %problem.id,
            round,
            a = %next_a.objective,
            b = %next_b.objective,
            "debate round finished"
        );
        state.history_a.push(next_a);
        state.history_b.push(next_b);
        Ok(state)
    }

    /// Returns the revised candidate and whether the previous one was kept.
    fn revise(
        &self,
        team: &AgentTeam,
        problem: &ProblemInstance,
        own: &CandidateSolution,
        peer: &CandidateSolution,
        discrepancy: Option<&str>,
    ) -> (CandidateSolution, bool) {
        let context = self.debate_context(team, problem, discrepancy);
        match team.revise(problem, own, peer, &context) {
            Ok((formulation, code, warnings)) => {
                let mut run = team.execute(&code);
                run.feedback.warnings.extend(warnings);
                let candidate = CandidateSolution {
                    formulation,
                    code,
                    objective: run.objective,
                    feedback: run.feedback,
                    team_id: own.team_id.clone(),
                    debug_attempts: own.debug_attempts,
                };
                (candidate, false)
            }
            Err(e) => {
                tracing::warn!(team = %team.id(), error = %e, "no usable revision; keeping previous candidate");
                (own.clone(), true)
            }
        }
    }

    pub fn run(
        &self,
        problem: &ProblemInstance,
        a: CandidateSolution,
        b: CandidateSolution,
    ) -> Result<DebateOutcome, DebateError> {
        self.config.validate()?;
        let mut state = DebateState::new(a, b, self.config.tolerance);
        if !state.initial_trigger {
            let chosen = pick_consensus(state.last_a(), state.last_b(), self.config.tolerance)?.clone();
            state.final_candidate = Some(chosen);
            state.verdict = Some(Verdict::NoDebateNeeded);
            return Ok(DebateOutcome { state, pending_write: None });
        }
        while state.round < self.config.max_rounds {
            state = self.run_round(problem, state)?;
            if !should_trigger(state.last_a().objective, state.last_b().objective, self.config.tolerance) {
                let chosen = pick_consensus(state.last_a(), state.last_b(), self.config.tolerance)?.clone();
                state.final_candidate = Some(chosen);
                state.verdict = Some(Verdict::Consensus);
                break;
            }
        }
        if state.verdict.is_none() {
            let chosen = stability_fallback(&state.history_a, &state.history_b)?.clone();
            state.final_candidate = Some(chosen);
            state.verdict = Some(Verdict::Fallback);
        }
        let pending_write = match (state.verdict, state.final_objective()) {
            (Some(Verdict::Consensus), Objective::Value(v)) => {
                let discrepancy = match &state.initial_discrepancy {
                    Some(d) => d.clone(),
                    None => self.describe(problem, &state.history_a[0], &state.history_b[0]),
                };
                state.initial_discrepancy = Some(discrepancy.clone());
                Some(PendingDebateWrite {
                    problem: problem.clone(),
                    discrepancy,
                    initial_a: state.history_a[0].clone(),
                    initial_b: state.history_b[0].clone(),
                    transcript: state.transcript.clone(),
                    final_objective: v,
                    verdict: Verdict::Consensus,
                })
            }
            _ => None,
        };
        Ok(DebateOutcome { state, pending_write })
    }
}

pub fn format_debate_entries(entries: &[Arc<DebateEntry>], budget: usize) -> String {
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let bullets = |items: &[String]| items.iter().map(|s| format!("- {s}")).collect::<Vec<_>>().join("\n");
            let body = format!(
                "Summary: {}\nMismatch reason: {}\nDecisive argument: {}\nGuardrails:\n{}\nModeling patterns:\n{}",
                e.summary,
                e.mismatch_reason,
                e.decisive_argument,
                bullets(&e.guardrails),
                bullets(&e.modeling_patterns)
            );
            format!("### Past debate {}\n{}", i + 1, truncate_chars(&body, budget))
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}
