//! Solver environment: runs candidate code in a child process with a hard
//! timeout and turns its output into an objective value plus feedback.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Line prefix candidate code prints its objective with.
pub const OBJECTIVE_MARKER: &str = "OBJECTIVE_VALUE:";
/// Prefix of the result envelope line emitted by the runner harness.
pub const RUNNER_SENTINEL: &str = "##AGORA_RESULT##";
const CANDIDATE_FILE: &str = "candidate.py";

/// Solver-evaluated objective, or failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Value(f64),
    Failure,
}

impl Objective {
    pub fn value(self) -> Option<f64> {
        match self {
            Objective::Value(v) => Some(v),
            Objective::Failure => None,
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Objective::Failure)
    }
}

impl From<Option<f64>> for Objective {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Objective::Failure, Objective::Value)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Value(v) => write!(f, "{v}"),
            Objective::Failure => f.write_str("FAIL"),
        }
    }
}

impl Serialize for Objective {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Objective {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Solved,
    RuntimeError,
    Timeout,
    NoObjective,
    LaunchError,
    /// The team pipeline never produced runnable code (malformed completions
    /// or an unreachable backend).
    Aborted,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Solved => "solved",
            ExecStatus::RuntimeError => "runtime_error",
            ExecStatus::Timeout => "timeout",
            ExecStatus::NoObjective => "no_objective",
            ExecStatus::LaunchError => "launch_error",
            ExecStatus::Aborted => "aborted",
        }
    }
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionFeedback {
    pub status: ExecStatus,
    pub stdout: String,
    pub stderr: String,
    pub exit_code: Option<i32>,
    /// Seconds.
    pub wall_time: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExecutionFeedback {
    pub fn aborted(reason: impl Into<String>) -> Self {
        Self {
            status: ExecStatus::Aborted,
            stdout: String::new(),
            stderr: reason.into(),
            exit_code: None,
            wall_time: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn is_solved(&self) -> bool {
        self.status == ExecStatus::Solved
    }

    /// Short flag for prompts: exit code plus the tail of the solver log.
    pub fn solver_flag(&self) -> String {
        let exit = self.exit_code.map_or_else(|| "none".to_string(), |c| c.to_string());
        let tail: Vec<&str> = self.stdout.lines().rev().take(5).collect::<Vec<_>>().into_iter().rev().collect();
        if tail.is_empty() {
            format!("status={} exit_code={exit}", self.status)
        } else {
            format!("status={} exit_code={exit}; last solver output:\n{}", self.status, tail.join("\n"))
        }
    }
}

/// Result of one `run_code` call.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub objective: Objective,
    pub feedback: ExecutionFeedback,
}

/// Parses the objective from the last marker line whose token is numeric.
/// Non-finite values count as no objective.
pub fn parse_objective(stdout: &str) -> Option<f64> {
    let last = stdout.lines().rev().find_map(|line| {
        let rest = line.trim_start().strip_prefix(OBJECTIVE_MARKER)?;
        let mut parts = rest.split_whitespace();
        let token = parts.next()?;
        if parts.next().is_some() {
            return None;
        }
        token.parse::<f64>().ok()
    })?;
    last.is_finite().then_some(last)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutorConfig {
    pub interpreter_argv: Vec<String>,
    pub timeout: Duration,
    /// Extra time allowed for kill and reaping after the timeout fires.
    pub grace: Duration,
    pub pool_size: usize,
    /// When set, candidates run under this harness script and report
    /// through a sentinel-prefixed JSON envelope.
    pub runner_harness: Option<PathBuf>,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            interpreter_argv: vec!["python3".into()],
            timeout: Duration::from_secs(120),
            grace: Duration::from_secs(2),
            pool_size: 4,
            runner_harness: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct RunnerEnvelope {
    status: String,
    objective: Option<f64>,
    #[serde(default)]
    stdout: String,
    #[serde(default)]
    stderr: String,
    #[serde(default)]
    traceback: Option<String>,
}

fn parse_envelope(stdout: &str) -> Option<RunnerEnvelope> {
    let last = stdout.lines().rev().find(|l| !l.trim().is_empty())?;
    serde_json::from_str(last.strip_prefix(RUNNER_SENTINEL)?).ok()
}

struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("pool lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("pool lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("pool lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct Executor {
    config: ExecutorConfig,
    permits: Permits,
}

impl fmt::Debug for Executor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Executor").field("config", &self.config).finish()
    }
}

impl Executor {
    pub fn new(config: ExecutorConfig) -> Self {
        let pool = config.pool_size.max(1);
        Self { config, permits: Permits { free: Mutex::new(pool), cv: Condvar::new() } }
    }

    pub fn config(&self) -> &ExecutorConfig {
        &self.config
    }

    pub fn default_timeout(&self) -> Duration {
        self.config.timeout
    }

    /// Runs `code` in a fresh temp directory with the configured interpreter.
    pub fn run_code(&self, code: &str, timeout: Duration) -> Execution {
        let _permit = self.permits.acquire();
        let started = Instant::now();
        let launch_error = |msg: String| Execution {
            objective: Objective::Failure,
            feedback: ExecutionFeedback {
                status: ExecStatus::LaunchError,
                stdout: String::new(),
                stderr: msg,
                exit_code: None,
                wall_time: started.elapsed().as_secs_f64(),
                warnings: Vec::new(),
            },
        };
        if code.trim().is_empty() {
            return launch_error("empty candidate code".into());
        }
        let Some((program, args)) = self.config.interpreter_argv.split_first() else {
            return launch_error("no interpreter configured".into());
        };
        let workspace = match tempfile::Builder::new().prefix("candidate-").tempdir() {
            Ok(dir) => dir,
            Err(e) => return launch_error(format!("cannot create workspace: {e}")),
        };
        if let Err(e) = std::fs::write(workspace.path().join(CANDIDATE_FILE), code) {
            return launch_error(format!("cannot write candidate: {e}"));
        }

        let mut cmd = Command::new(program);
        cmd.args(args);
        if let Some(harness) = &self.config.runner_harness {
            cmd.arg(harness);
        }
        cmd.arg(CANDIDATE_FILE)
            .current_dir(workspace.path())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let mut child = match cmd.spawn() {
            Ok(child) => child,
            Err(e) => return launch_error(format!("cannot launch `{program}`: {e}")),
        };
        let pid = child.id();
        let stdout_reader = spawn_reader(child.stdout.take());
        let stderr_reader = spawn_reader(child.stderr.take());

        let deadline = started + timeout;
        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() >= deadline => {
                    timed_out = true;
                    kill_group(pid);
                    break child.wait().ok();
                }
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(_) => {
                    kill_group(pid);
                    break child.wait().ok();
                }
            }
        };
        // Reap anything the candidate left running in its group.
        kill_group(pid);
        let stdout = strip_workspace(stdout_reader.join().unwrap_or_default(), workspace.path());
        let stderr = strip_workspace(stderr_reader.join().unwrap_or_default(), workspace.path());
        let exit_code = status.and_then(|s| s.code());
        let wall_time = started.elapsed().as_secs_f64();

        let mut feedback =
            ExecutionFeedback { status: ExecStatus::RuntimeError, stdout, stderr, exit_code, wall_time, warnings: Vec::new() };
        if timed_out {
            feedback.status = ExecStatus::Timeout;
            feedback.stderr.push_str(&format!("\n[killed after {:.1}s timeout]", timeout.as_secs_f64()));
            return Execution { objective: Objective::Failure, feedback };
        }
        if self.config.runner_harness.is_some() {
            return self.interpret_envelope(feedback);
        }
        let objective = parse_objective(&feedback.stdout);
        feedback.status = match (exit_code, objective) {
            (Some(0), Some(_)) => ExecStatus::Solved,
            (Some(0), None) => ExecStatus::NoObjective,
            _ => ExecStatus::RuntimeError,
        };
        let objective = if feedback.status == ExecStatus::Solved { objective.into() } else { Objective::Failure };
        Execution { objective, feedback }
    }

    fn interpret_envelope(&self, mut feedback: ExecutionFeedback) -> Execution {
        let envelope = match (feedback.exit_code, parse_envelope(&feedback.stdout)) {
            (Some(0), Some(env)) => env,
            _ => {
                feedback.status = ExecStatus::LaunchError;
                feedback.stderr.push_str("\n[runner harness produced no result envelope]");
                return Execution { objective: Objective::Failure, feedback };
            }
        };
        feedback.stdout = envelope.stdout;
        feedback.stderr = match envelope.traceback {
            Some(tb) if !envelope.stderr.contains(&tb) => format!("{}{tb}", envelope.stderr),
            _ => envelope.stderr,
        };
        let objective = envelope.objective.filter(|v| v.is_finite());
        feedback.status = match (envelope.status.as_str(), objective) {
            ("ok", Some(_)) => ExecStatus::Solved,
            ("exception", _) => ExecStatus::RuntimeError,
            _ => ExecStatus::NoObjective,
        };
        let objective = if feedback.is_solved() { objective.into() } else { Objective::Failure };
        Execution { objective, feedback }
    }
}

/// Removes the per-run directory from captured text so tracebacks read
/// `File "candidate.py"` whatever the temp path was.
fn strip_workspace(text: String, workspace: &Path) -> String {
    let mut out = text;
    let canonical = workspace.canonicalize().ok();
    for dir in std::iter::once(workspace.to_path_buf()).chain(canonical) {
        let prefix = format!("{}/", dir.display());
        if out.contains(&prefix) {
            out = out.replace(&prefix, "");
        }
    }
    out
}

fn spawn_reader<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

#[cfg(unix)]
fn kill_group(pid: u32) {
    // The child leads its own process group; signal the whole group.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

#[cfg(not(unix))]
fn kill_group(_pid: u32) {}
