//! `colloquy`: run, record and replay benchmark evaluations, inspect memory
//! stores, and render saved reports.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use colloquy_core::benchmark::{load_benchmark, BenchError, Benchmark};
use colloquy_core::config::Isolation;
use colloquy_core::memory::{MemoryRecord, Store, StoreKind};
use colloquy_core::{Config, DebateEntry, DebugEntry, EvaluationReport, Mode, SolutionEntry};

#[derive(Parser)]
#[command(name = "colloquy", version, about = "Two-team optimization modeling with debate and memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve and score benchmark files.
    Run(RunArgs),
    /// Same as `run --mode replay`.
    Replay(RunArgs),
    /// Same as `run --mode record`.
    Record(RunArgs),
    #[command(subcommand)]
    Memory(MemoryCommand),
    /// Render a saved report.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Benchmark JSONL file; repeat for several.
    #[arg(long = "benchmark", required = true)]
    benchmarks: Vec<PathBuf>,
    #[arg(long)]
    config: PathBuf,
    /// Ignored by `replay` and `record`.
    #[arg(long, value_enum, default_value_t = ModeArg::Live)]
    mode: ModeArg,
    /// Overrides the cassette path from the config.
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-instance transcripts.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Re-execute each final program before scoring.
    #[arg(long)]
    reverify: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Subcommand)]
enum MemoryCommand {
    /// Entry counts per store.
    Inspect(MemoryArgs),
    /// Dump one store as JSON.
    Export {
        #[command(flatten)]
        target: MemoryArgs,
        #[arg(long, value_enum)]
        store: StoreArg,
        /// Team whose bank to export when memory is isolated per team.
        #[arg(long)]
        team: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep embedding vectors in the output.
        #[arg(long)]
        with_vectors: bool,
    },
}

#[derive(Args)]
struct MemoryArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the memory directory from the config.
    #[arg(long)]
    dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    report: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Record,
    Replay,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Live => Mode::Live,
            ModeArg::Record => Mode::Record,
            ModeArg::Replay => Mode::Replay,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum StoreArg {
    Solution,
    Debug,
    Debate,
}

/// Exit status: 1 when the run itself failed, 2 for bad input.
enum Failure {
    Run(String),
    Input(String),
}

impl Failure {
    fn bench(e: BenchError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let result = match cli.command {
        Command::Run(args) => {
            let mode = args.mode.into();
            run(args, mode)
        }
        Command::Replay(args) => run(args, Mode::Replay),
        Command::Record(args) => run(args, Mode::Record),
        Command::Memory(cmd) => memory(cmd),
        Command::Report(args) => report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_benchmarks(paths: &[PathBuf]) -> Result<Benchmark, Failure> {
    let mut seen = HashSet::new();
    let mut instances = Vec::new();
    for path in paths {
        let bench = load_benchmark(path).map_err(Failure::bench)?;
        for inst in bench.instances {
            if !seen.insert(inst.id.clone()) {
                return Err(Failure::Input(format!("instance id `{}` appears in more than one file", inst.id)));
            }
            instances.push(inst);
        }
    }
    let name = match paths {
        [one] => one.file_stem().map_or_else(|| "benchmark".into(), |s| s.to_string_lossy().into_owned()),
        _ => "combined".into(),
    };
    let bench = Benchmark::new(name, instances);
    bench.require_ground_truth().map_err(Failure::bench)?;
    Ok(bench)
}

fn render(report: &EvaluationReport, format: Format) -> String {
    match format {
        Format::Table => report.render_table(),
        Format::Csv => report.render_csv(),
        Format::Json => report.to_json() + "\n",
    }
}

fn run(args: RunArgs, mode: Mode) -> Result<(), Failure> {
    let config = Config::load(&args.config).map_err(|e| Failure::Input(e.to_string()))?;
    let benchmark = load_benchmarks(&args.benchmarks)?;
    let runtime = config.build(mode, args.cassette.as_deref()).map_err(|e| Failure::Input(e.to_string()))?;
    let mut settings = config.run_settings();
    if let Some(p) = args.parallelism {
        if p == 0 {
            return Err(Failure::Input("--parallelism must be at least 1".into()));
        }
        settings.parallelism = p;
    }
    settings.transcript_dir = args.transcripts;
    if args.reverify {
        settings.reverify = Some(Duration::from_secs(config.evaluation.reverify_timeout_secs));
    }
    tracing::info!(instances = benchmark.instances.len(), ?mode, "starting run");
    let report = runtime
        .orchestrator
        .run_benchmark(&benchmark, &settings)
        .map_err(|e| Failure::Run(e.to_string()))?;
    if let Some(cassette) = &runtime.cassette {
        if mode == Mode::Replay && cassette.remaining() > 0 {
            tracing::warn!(unused = cassette.remaining(), "cassette has entries this run did not consume");
        }
    }
    if let Some(out) = &args.out {
        write(out, &report.to_json())?;
    }
    print!("{}", render(&report, args.format));
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure::Run(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))
}

/// Bank directories named by the config, labelled by owner.
fn bank_dirs(config: &Config, dir: Option<PathBuf>) -> Result<Vec<(String, PathBuf)>, Failure> {
    let Some(root) = dir.or_else(|| config.memory.dir.clone()) else {
        return Err(Failure::Input("no memory directory: set [memory] dir or pass --dir".into()));
    };
    if !root.is_dir() {
        return Err(Failure::Input(format!("{} is not a directory", root.display())));
    }
    let (a, b) = config.team_configs();
    Ok(match config.memory.isolation {
        Isolation::Shared => vec![("shared".into(), root)],
        Isolation::PerTeam => vec![(a.team_id.clone(), root.join(&a.team_id)), (b.team_id.clone(), root.join(&b.team_id))],
    })
}

fn open_store<E: MemoryRecord>(dir: &Path, dim: usize) -> Result<(Store<E>, usize), Failure> {
    let (store, report) = Store::<E>::open(dir.join(E::KIND.file_name()), dim).map_err(|e| Failure::Input(e.to_string()))?;
    Ok((store, report.corrupt))
}

fn memory(cmd: MemoryCommand) -> Result<(), Failure> {
    match cmd {
        MemoryCommand::Inspect(args) => {
            let config = Config::load(&args.config).map_err(|e| Failure::Input(e.to_string()))?;
            let dim = config.embedding.dim;
            println!("{:<10} {:<9} {:>8} {:>8}", "bank", "store", "entries", "corrupt");
            for (label, dir) in bank_dirs(&config, args.dir)? {
                let (s, sc) = open_store::<SolutionEntry>(&dir, dim)?;
                let (d, dc) = open_store::<DebugEntry>(&dir, dim)?;
                let (b, bc) = open_store::<DebateEntry>(&dir, dim)?;
                for (kind, len, corrupt) in
                    [(StoreKind::Solution, s.len(), sc), (StoreKind::Debug, d.len(), dc), (StoreKind::Debate, b.len(), bc)]
                {
                    println!("{label:<10} {:<9} {len:>8} {corrupt:>8}", kind.to_string());
                }
            }
            Ok(())
        }
        MemoryCommand::Export { target, store, team, out, with_vectors } => {
            let config = Config::load(&target.config).map_err(|e| Failure::Input(e.to_string()))?;
            let dirs = bank_dirs(&config, target.dir)?;
            let dir = match (dirs.as_slice(), team) {
                ([(_, only)], _) => only.clone(),
                (many, Some(team)) => many
                    .iter()
                    .find(|(label, _)| *label == team)
                    .map(|(_, d)| d.clone())
                    .ok_or_else(|| Failure::Input(format!("no bank for team `{team}`")))?,
                (_, None) => return Err(Failure::Input("memory is per team; pass --team".into())),
            };
            let dim = config.embedding.dim;
            let mut entries: Vec<Value> = match store {
                StoreArg::Solution => to_values(open_store::<SolutionEntry>(&dir, dim)?.0),
                StoreArg::Debug => to_values(open_store::<DebugEntry>(&dir, dim)?.0),
                StoreArg::Debate => to_values(open_store::<DebateEntry>(&dir, dim)?.0),
            };
            if !with_vectors {
                for e in &mut entries {
                    if let Some(obj) = e.as_object_mut() {
                        obj.remove("key_vec");
                    }
                }
            }
            let text = serde_json::to_string_pretty(&entries).expect("entries serialize") + "\n";
            match out {
                Some(path) => write(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn to_values<E: MemoryRecord>(store: Store<E>) -> Vec<Value> {
    store.snapshot().iter().map(|e| serde_json::to_value(&**e).expect("entry serializes")).collect()
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.report)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.report.display())))?;
    let report = EvaluationReport::from_json(&text)
        .map_err(|e| Failure::Input(format!("{}: not a report: {e}", args.report.display())))?;
    print!("{}", render(&report, args.format));
    Ok(())
}
