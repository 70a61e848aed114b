//! Benchmark files, the pass@1 answer rule, and evaluation reports.
//!
//! A benchmark file is JSONL with one `{"id", "benchmark", "description",
//! "ground_truth"}` object per line.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debate::Verdict;
use crate::executor::Objective;
use crate::team::ProblemInstance;

pub const RELATIVE_TOLERANCE: f64 = 0.05;
pub const ZERO_ABSOLUTE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}:{line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
    #[error("duplicate instance id `{id}` ({path}:{line})")]
    DuplicateId { path: PathBuf, line: usize, id: String },
    #[error("instance `{0}` has no ground_truth; evaluation needs one")]
    MissingGroundTruth(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid run settings: {0}")]
    InvalidSettings(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub instances: Vec<ProblemInstance>,
}

impl Benchmark {
    pub fn new(name: impl Into<String>, instances: Vec<ProblemInstance>) -> Self {
        Self { name: name.into(), instances }
    }

    pub fn require_ground_truth(&self) -> Result<(), BenchError> {
        match self.instances.iter().find(|i| i.ground_truth.is_none_or(|g| !g.is_finite())) {
            Some(missing) => Err(BenchError::MissingGroundTruth(missing.id.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceLine {
    id: String,
    #[serde(default)]
    benchmark: Option<String>,
    description: String,
    #[serde(default)]
    ground_truth: Option<f64>,
}

/// Parses a benchmark file. Instances without a `benchmark` field take the
/// file stem; ground truth is checked only when evaluation needs it.
pub fn load_benchmark(path: impl AsRef<Path>) -> Result<Benchmark, BenchError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| BenchError::Io { path: path.to_path_buf(), message: e.to_string() })?;
    let name = path.file_stem().map_or_else(|| "benchmark".to_string(), |s| s.to_string_lossy().into_owned());
    parse_benchmark(&name, &text, path)
}

pub fn parse_benchmark(name: &str, text: &str, path: &Path) -> Result<Benchmark, BenchError> {
    let mut seen = HashSet::new();
    let mut instances = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let schema = |message: String| BenchError::Schema { path: path.to_path_buf(), line, message };
        let parsed: InstanceLine = serde_json::from_str(raw).map_err(|e| schema(e.to_string()))?;
        if parsed.id.trim().is_empty() {
            return Err(schema("empty id".into()));
        }
        if parsed.description.trim().is_empty() {
            return Err(schema(format!("instance `{}` has an empty description", parsed.id)));
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(BenchError::DuplicateId { path: path.to_path_buf(), line, id: parsed.id });
        }
        instances.push(ProblemInstance {
            id: parsed.id,
            description: parsed.description,
            ground_truth: parsed.ground_truth,
            benchmark: parsed.benchmark.unwrap_or_else(|| name.to_string()),
        });
    }
    Ok(Benchmark::new(name, instances))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerVerdict {
    Correct,
    Incorrect,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub relative: f64,
    /// Used instead of the relative rule when the ground truth is zero.
    pub zero_absolute: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { relative: RELATIVE_TOLERANCE, zero_absolute: ZERO_ABSOLUTE_TOLERANCE }
    }
}

/// Pass@1 rule with inclusive boundaries.
pub fn evaluate_answer(predicted: Objective, ground_truth: f64) -> AnswerVerdict {
    evaluate_answer_with(predicted, ground_truth, Tolerances::default())
}

pub fn evaluate_answer_with(predicted: Objective, ground_truth: f64, tol: Tolerances) -> AnswerVerdict {
    let Objective::Value(pred) = predicted else { return AnswerVerdict::Failed };
    let correct = if ground_truth == 0.0 {
        pred.abs() <= tol.zero_absolute
    } else {
        (pred - ground_truth).abs() / ground_truth.abs() <= tol.relative
    };
    if correct {
        AnswerVerdict::Correct
    } else {
        AnswerVerdict::Incorrect
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkScore {
    pub correct: usize,
    pub incorrect: usize,
    pub failed: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub id: String,
    pub benchmark: String,
    pub final_objective: Objective,
    pub ground_truth: f64,
    pub verdict: AnswerVerdict,
    pub debate_verdict: Verdict,
    pub rounds_used: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_benchmark: BTreeMap<String, BenchmarkScore>,
    pub macro_average: f64,
    pub per_instance: Vec<InstanceReport>,
}

impl EvaluationReport {
    /// Aggregates instance rows, keeping their order.
    pub fn from_instances(per_instance: Vec<InstanceReport>) -> Self {
        let mut per_benchmark: BTreeMap<String, BenchmarkScore> = BTreeMap::new();
        for row in &per_instance {
            let score = per_benchmark.entry(row.benchmark.clone()).or_insert(BenchmarkScore {
                correct: 0,
                incorrect: 0,
                failed: 0,
                total: 0,
                accuracy: 0.0,
            });
            score.total += 1;
            match row.verdict {
                AnswerVerdict::Correct => score.correct += 1,
                AnswerVerdict::Incorrect => score.incorrect += 1,
                AnswerVerdict::Failed => score.failed += 1,
            }
        }
        for score in per_benchmark.values_mut() {
            score.accuracy = 100.0 * score.correct as f64 / score.total as f64;
        }
        let macro_average = if per_benchmark.is_empty() {
            0.0
        } else {
            per_benchmark.values().map(|s| s.accuracy).sum::<f64>() / per_benchmark.len() as f64
        };
        Self { per_benchmark, macro_average, per_instance }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Fixed-width table: one column per benchmark plus the macro average.
    pub fn render_table(&self) -> String {
        let mut headers: Vec<String> = vec!["Method".into()];
        headers.extend(self.per_benchmark.keys().cloned());
        headers.push("Avg.".into());
        let mut cells: Vec<String> = vec!["pass@1 (%)".into()];
        cells.extend(self.per_benchmark.values().map(|s| format!("{:.1}", s.accuracy)));
        cells.push(format!("{:.1}", self.macro_average));
        let widths: Vec<usize> = headers.iter().zip(&cells).map(|(h, c)| h.len().max(c.len())).collect();
        let row = |items: &[String]| {
            items
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect::<Vec<_>>()
                .join(" | ")
        };
        let rule = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");
        let mut out = String::new();
        let _ = writeln!(out, "{}", row(&headers));
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(out, "{}", row(&cells));
        let _ = writeln!(out);
        for (name, s) in &self.per_benchmark {
            let _ = writeln!(
                out,
                "{name}: {}/{} correct, {} incorrect, {} failed",
                s.correct, s.total, s.incorrect, s.failed
            );
        }
        out
    }

    /// CSV with one row per benchmark and a final macro-average row.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("benchmark,correct,incorrect,failed,total,accuracy\n");
        for (name, s) in &self.per_benchmark {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.2}",
                csv_field(name),
                s.correct,
                s.incorrect,
                s.failed,
                s.total,
                s.accuracy
            );
        }
        let _ = writeln!(out, "macro_average,,,,,{:.2}", self.macro_average);
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
