//! TOML run configuration and wiring of the runtime from it.
//!
//! ```toml
//! [backends.gpt]
//! base_url = "https://api.openai.com/v1"
//! model = "gpt-4o"
//! api_key_env = "OPENAI_API_KEY"
//!
//! [teams.a]
//! backend = "gpt"
//!
//! [teams.b]
//! backend = "gpt"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::Tolerances;
use crate::debate::DebateConfig;
use crate::executor::{Executor, ExecutorConfig};
use crate::gateway::{
    Cassette, ChatBackend, EmbeddingProvider, Gateway, GatewayError, HashedBagEmbedder, HttpBackend, HttpEmbedder,
    HttpSettings, RecordingBackend, RecordingEmbedder, ReplayBackend, ReplayEmbedder, SamplingDefaults,
    DEFAULT_EMBEDDING_DIM, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE,
};
use crate::memory::{BankLoadReport, MemoryBank, MemoryError, MemorySettings};
use crate::orchestrator::{Orchestrator, RunSettings, WriteBack};
use crate::team::{AgentTeam, RetrievalCounts, TeamConfig, TeamError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Team(#[from] TeamError),
}

/// How chat backends reach the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_request_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_context_limit")]
    pub context_limit: u32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_request_timeout() -> u64 {
    600
}
fn default_context_limit() -> u32 {
    128_000
}
fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Local hashed bag-of-words; needs no network and is never recorded.
    #[default]
    Hashed,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::Hashed,
            dim: DEFAULT_EMBEDDING_DIM,
            base_url: None,
            model: None,
            api_key_env: None,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CassetteConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamSection {
    pub backend: String,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default = "default_retry_budget")]
    pub retry_budget: u32,
    #[serde(default = "default_exec_timeout")]
    pub exec_timeout_secs: u64,
    #[serde(default = "yes")]
    pub memory_enabled: bool,
    #[serde(default)]
    pub retrieval: RetrievalCounts,
    #[serde(default = "default_entry_budget")]
    pub entry_char_budget: usize,
}

fn default_retry_budget() -> u32 {
    3
}
fn default_exec_timeout() -> u64 {
    120
}
fn yes() -> bool {
    true
}
fn default_entry_budget() -> usize {
    4000
}

impl TeamSection {
    fn to_config(&self, default_id: &str) -> TeamConfig {
        TeamConfig {
            team_id: self.id.clone().unwrap_or_else(|| default_id.to_string()),
            backend_id: self.backend.clone(),
            retry_budget: self.retry_budget,
            exec_timeout: Duration::from_secs(self.exec_timeout_secs),
            memory_enabled: self.memory_enabled,
            retrieval_counts: self.retrieval,
            entry_char_budget: self.entry_char_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamsConfig {
    pub a: TeamSection,
    pub b: TeamSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Isolation {
    /// Both teams read and write one bank.
    #[default]
    Shared,
    /// Each team has its own bank under `<dir>/<team id>`.
    PerTeam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub enabled: bool,
    /// Store directory; in-memory only when unset.
    pub dir: Option<PathBuf>,
    /// Backend for signatures, diagnoses and summaries; team A's by default.
    pub backend: Option<String>,
    pub write_back: WriteBack,
    pub isolation: Isolation,
    pub signature_char_budget: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            dir: None,
            backend: None,
            write_back: WriteBack::Online,
            isolation: Isolation::Shared,
            signature_char_budget: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorSection {
    pub interpreter: Vec<String>,
    pub timeout_secs: u64,
    pub grace_secs: u64,
    pub pool_size: usize,
    pub runner_harness: Option<PathBuf>,
}

impl Default for ExecutorSection {
    fn default() -> Self {
        Self { interpreter: vec!["python3".into()], timeout_secs: 120, grace_secs: 2, pool_size: 4, runner_harness: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub relative_tolerance: f64,
    pub zero_absolute_tolerance: f64,
    pub reverify_timeout_secs: u64,
    pub parallelism: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { relative_tolerance: 0.05, zero_absolute_tolerance: 1e-3, reverify_timeout_secs: 90, parallelism: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub cassette: CassetteConfig,
    pub teams: TeamsConfig,
    #[serde(default)]
    pub debate: DebateConfig,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub executor: ExecutorSection,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

/// Everything needed to solve instances, built from a [`Config`].
pub struct Runtime {
    pub gateway: Arc<Gateway>,
    pub executor: Arc<Executor>,
    pub orchestrator: Orchestrator,
    /// Distinct memory banks (one when shared).
    pub banks: Vec<Arc<MemoryBank>>,
    pub load_reports: Vec<BankLoadReport>,
    pub cassette: Option<Arc<Cassette>>,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.memory.dir);
        fix(&mut self.cassette.path);
        fix(&mut self.executor.runner_harness);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.debate.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (name, team) in [("a", &self.teams.a), ("b", &self.teams.b)] {
            team.to_config(name).validate()?;
        }
        let (a_id, b_id) = (self.team_id_a(), self.team_id_b());
        if a_id == b_id {
            return invalid(format!("teams need distinct ids, both are `{a_id}`"));
        }
        if self.executor.interpreter.is_empty() {
            return invalid("executor.interpreter must name a program".into());
        }
        if self.executor.pool_size == 0 {
            return invalid("executor.pool_size must be at least 1".into());
        }
        if self.executor.timeout_secs == 0 {
            return invalid("executor.timeout_secs must be positive".into());
        }
        if self.evaluation.parallelism == 0 {
            return invalid("evaluation.parallelism must be at least 1".into());
        }
        if !(self.evaluation.relative_tolerance >= 0.0 && self.evaluation.zero_absolute_tolerance >= 0.0) {
            return invalid("evaluation tolerances must be non-negative".into());
        }
        if self.embedding.dim == 0 {
            return invalid("embedding.dim must be positive".into());
        }
        if self.embedding.kind == EmbeddingKind::Http && (self.embedding.base_url.is_none() || self.embedding.model.is_none()) {
            return invalid("http embeddings need base_url and model".into());
        }
        Ok(())
    }

    fn team_id_a(&self) -> String {
        self.teams.a.id.clone().unwrap_or_else(|| "team-a".into())
    }

    fn team_id_b(&self) -> String {
        self.teams.b.id.clone().unwrap_or_else(|| "team-b".into())
    }

    pub fn team_configs(&self) -> (TeamConfig, TeamConfig) {
        (self.teams.a.to_config(&self.team_id_a()), self.teams.b.to_config(&self.team_id_b()))
    }

    pub fn executor_config(&self) -> ExecutorConfig {
        ExecutorConfig {
            interpreter_argv: self.executor.interpreter.clone(),
            timeout: Duration::from_secs(self.executor.timeout_secs),
            grace: Duration::from_secs(self.executor.grace_secs),
            pool_size: self.executor.pool_size,
            runner_harness: self.executor.runner_harness.clone(),
        }
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            parallelism: self.evaluation.parallelism,
            write_back: if self.memory.enabled { self.memory.write_back } else { WriteBack::Disabled },
            tolerances: Tolerances {
                relative: self.evaluation.relative_tolerance,
                zero_absolute: self.evaluation.zero_absolute_tolerance,
            },
            reverify: None,
            transcript_dir: None,
        }
    }

    fn referenced_backends(&self) -> Vec<String> {
        let mut names = vec![self.teams.a.backend.clone(), self.teams.b.backend.clone()];
        if let Some(b) = &self.memory.backend {
            names.push(b.clone());
        }
        names.sort();
        names.dedup();
        names
    }

    fn http_settings(&self, name: &str, backend: &BackendConfig) -> HttpSettings {
        HttpSettings {
            name: name.to_string(),
            base_url: backend.base_url.clone(),
            model: backend.model.clone(),
            api_key: backend.api_key_env.as_ref().and_then(|var| std::env::var(var).ok()),
            timeout: Duration::from_secs(backend.timeout_secs),
        }
    }

    fn cassette(&self, mode: Mode, override_path: Option<&Path>) -> Result<Option<Arc<Cassette>>, ConfigError> {
        let path = override_path.map(Path::to_path_buf).or_else(|| self.cassette.path.clone());
        match (mode, path) {
            (Mode::Live, _) => Ok(None),
            (_, None) => Err(ConfigError::Invalid(format!("{mode:?} mode needs a cassette path").to_lowercase())),
            (Mode::Record, Some(p)) => Ok(Some(Arc::new(Cassette::open(p)?))),
            (Mode::Replay, Some(p)) => Ok(Some(Arc::new(Cassette::load(p)?))),
        }
    }

    fn embedder(&self, mode: Mode, cassette: Option<&Arc<Cassette>>) -> Arc<dyn EmbeddingProvider> {
        if self.embedding.kind == EmbeddingKind::Hashed {
            return Arc::new(HashedBagEmbedder::new(self.embedding.dim));
        }
        let live = || {
            let settings = HttpSettings {
                name: "embedding".into(),
                base_url: self.embedding.base_url.clone().unwrap_or_default(),
                model: self.embedding.model.clone().unwrap_or_default(),
                api_key: self.embedding.api_key_env.as_ref().and_then(|v| std::env::var(v).ok()),
                timeout: Duration::from_secs(self.embedding.timeout_secs),
            };
            Arc::new(HttpEmbedder::new(settings, Some(self.embedding.dim))) as Arc<dyn EmbeddingProvider>
        };
        match (mode, cassette) {
            (Mode::Record, Some(c)) => Arc::new(RecordingEmbedder::new(live(), c.clone())),
            (Mode::Replay, Some(c)) => Arc::new(ReplayEmbedder::new(c.clone(), self.embedding.dim)),
            _ => live(),
        }
    }

    pub fn build_gateway(&self, mode: Mode, cassette_path: Option<&Path>) -> Result<(Gateway, Option<Arc<Cassette>>), ConfigError> {
        let cassette = self.cassette(mode, cassette_path)?;
        let mut gateway = Gateway::new(self.embedder(mode, cassette.as_ref()));
        for name in self.referenced_backends() {
            let backend = self.backends.get(&name);
            if backend.is_none() && mode != Mode::Replay {
                return Err(ConfigError::Invalid(format!("backend `{name}` is referenced but not defined")));
            }
            let defaults = backend.map_or_else(SamplingDefaults::default, |b| SamplingDefaults {
                max_tokens: b.max_tokens,
                temperature: b.temperature,
            });
            let chat: Arc<dyn ChatBackend> = match (mode, &cassette, backend) {
                (Mode::Replay, Some(c), _) => Arc::new(ReplayBackend::new(c.clone())),
                (Mode::Record, Some(c), Some(b)) => Arc::new(RecordingBackend::new(
                    Arc::new(HttpBackend::new(self.http_settings(&name, b), b.context_limit)),
                    c.clone(),
                )),
                (_, _, Some(b)) => Arc::new(HttpBackend::new(self.http_settings(&name, b), b.context_limit)),
                (_, _, None) => unreachable!("checked above"),
            };
            gateway.add_backend(name, chat, defaults);
        }
        Ok((gateway, cassette))
    }

    /// Wires gateway, executor, memory banks and teams.
    pub fn build(&self, mode: Mode, cassette_path: Option<&Path>) -> Result<Runtime, ConfigError> {
        let (gateway, cassette) = self.build_gateway(mode, cassette_path)?;
        self.build_with_gateway(Arc::new(gateway), cassette)
    }

    pub fn build_with_gateway(&self, gateway: Arc<Gateway>, cassette: Option<Arc<Cassette>>) -> Result<Runtime, ConfigError> {
        let executor = Arc::new(Executor::new(self.executor_config()));
        let (cfg_a, cfg_b) = self.team_configs();
        let settings = MemorySettings {
            backend_id: self.memory.backend.clone().unwrap_or_else(|| cfg_a.backend_id.clone()),
            signature_char_budget: self.memory.signature_char_budget,
            lane: "memory".into(),
        };
        let mut banks = Vec::new();
        let mut load_reports = Vec::new();
        let mut open = |sub: Option<&str>| -> Result<Arc<MemoryBank>, ConfigError> {
            let bank = match &self.memory.dir {
                Some(dir) => {
                    let dir = sub.map_or_else(|| dir.clone(), |s| dir.join(s));
                    let (bank, report) = MemoryBank::open(&dir, gateway.clone(), settings.clone())?;
                    if report.corrupt() > 0 {
                        tracing::warn!(dir = %dir.display(), corrupt = report.corrupt(), "skipped corrupt memory lines");
                    }
                    load_reports.push(report);
                    bank
                }
                None => MemoryBank::in_memory(gateway.clone(), settings.clone()),
            };
            let bank = Arc::new(bank);
            banks.push(bank.clone());
            Ok(bank)
        };
        let (mem_a, mem_b) = match (self.memory.enabled, self.memory.isolation) {
            (false, _) => (None, None),
            (true, Isolation::Shared) => {
                let bank = open(None)?;
                (Some(bank.clone()), Some(bank))
            }
            (true, Isolation::PerTeam) => (Some(open(Some(&cfg_a.team_id))?), Some(open(Some(&cfg_b.team_id))?)),
        };
        let coordinator = mem_a.clone();
        let team_a = AgentTeam::new(cfg_a, gateway.clone(), executor.clone(), mem_a)?;
        let team_b = AgentTeam::new(cfg_b, gateway.clone(), executor.clone(), mem_b)?;
        let orchestrator = Orchestrator::new(team_a, team_b, self.debate, coordinator);
        Ok(Runtime { gateway, executor, orchestrator, banks, load_reports, cassette })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[backends.gpt]
base_url = "http://localhost:9"
model = "m"

[teams.a]
backend = "gpt"

[teams.b]
backend = "gpt"
"#;

    #[test]
    fn defaults_carry_protocol_constants() {
        let c = Config::from_toml(MINIMAL).unwrap();
        assert_eq!(c.debate.tolerance, 0.05);
        assert_eq!(c.debate.max_rounds, 3);
        assert_eq!(c.teams.a.retry_budget, 3);
        assert_eq!(c.teams.a.exec_timeout_secs, 120);
        assert_eq!(c.teams.a.retrieval, RetrievalCounts { solution: 4, debug: 3, debate: 2 });
        assert_eq!(c.evaluation.relative_tolerance, 0.05);
        assert_eq!(c.evaluation.zero_absolute_tolerance, 1e-3);
        assert_eq!(c.evaluation.reverify_timeout_secs, 90);
        assert_eq!(c.backends["gpt"].max_tokens, 16_384);
        assert_eq!(c.backends["gpt"].temperature, 0.01);
        let (a, b) = c.team_configs();
        assert_eq!((a.team_id.as_str(), b.team_id.as_str()), ("team-a", "team-b"));
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        let bad = format!("{MINIMAL}\n[debate]\ntolerance = 0.0\n");
        assert!(matches!(Config::from_toml(&bad), Err(ConfigError::Invalid(_))));
        let unknown = format!("{MINIMAL}\n[debate]\nrounds = 2\n");
        assert!(matches!(Config::from_toml(&unknown), Err(ConfigError::Parse(_))));
        let same_ids = MINIMAL.replace("[teams.b]\n", "[teams.b]\nid = \"team-a\"\n");
        assert!(Config::from_toml(&same_ids).is_err());
    }

    #[test]
    fn undefined_backend_fails_live_build() {
        let c = Config::from_toml(&MINIMAL.replace("[teams.b]\nbackend = \"gpt\"", "[teams.b]\nbackend = \"other\"")).unwrap();
        assert!(matches!(c.build(Mode::Live, None), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn replay_needs_a_cassette() {
        let c = Config::from_toml(MINIMAL).unwrap();
        assert!(c.build(Mode::Replay, None).is_err());
        assert!(c.build(Mode::Live, None).is_ok());
    }
}
