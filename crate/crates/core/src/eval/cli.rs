//! Command-line entry point.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use super::{
    distance_csv, read_logs, run_batch, spearman, sweep_by_distance, sweep_by_visibility,
    visibility_csv, BatchOptions, BatchReport, EvalError, DISTANCE_CSV_HEADER,
    VISIBILITY_CSV_HEADER,
};
use crate::agents::{AgentRegistry, ResultLine, TraceStep};
use crate::env::{load_env, visible_fraction, EnvGraph, SynthKind, SynthSpec};
use crate::http::EndpointConfig;
use crate::lm::{ReasonerConfig, ReasonerRegistry, RecordingReasoner, Reasoner, SamplingConfig};
use crate::perception::{PerceiverRegistry, PerceptionConfig};
use crate::taskgen::{sample_tasks, tasks_from_jsonl, tasks_to_jsonl, validate_task, Task};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Defaults that flags override. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub agents: Option<Vec<String>>,
    pub perception: Option<String>,
    pub backend: Option<String>,
    pub parallelism: Option<usize>,
    pub n: Option<usize>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub distance_sigma: Option<f64>,
    pub bearing_quantization_deg: Option<f64>,
    pub tau_steps: Option<f64>,
    pub summary_window: Option<usize>,
    pub retry_budget: Option<u32>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub lm_endpoint: Option<String>,
    pub vlm_endpoint: Option<String>,
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(name = "urbannav", version, about = "Landmark-guided city navigation workbench")]
pub struct Cli {
    /// JSON file presetting defaults for any flag below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic environment.
    EnvGen {
        #[arg(long, default_value = "grid")]
        kind: SynthKind,
        #[arg(long, default_value_t = 40)]
        width: u32,
        #[arg(long, default_value_t = 40)]
        height: u32,
        #[arg(long, default_value_t = 6)]
        landmarks: u32,
        /// Target fraction of nodes that see a landmark.
        #[arg(long, default_value_t = 0.4)]
        visible: f64,
        #[arg(long, default_value_t = 0.0)]
        blocked: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Check an environment file and print its vital statistics.
    EnvValidate {
        #[arg(long)]
        env: PathBuf,
    },
    /// Sample navigation tasks.
    TaskGen {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run agents over a task set.
    Run {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        /// Agent name; repeat or comma-separate for several.
        #[arg(long, value_delimiter = ',')]
        agent: Vec<String>,
        #[arg(long)]
        perception: Option<String>,
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallelism: Option<usize>,
        /// Transcript for the replay backend.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Append every reasoner exchange to this transcript.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Aggregate episode logs.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Distance and visibility sweeps over episode logs.
    Sweep {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        env: PathBuf,
        #[arg(short, long, default_value = "sweeps")]
        out: PathBuf,
    },
    /// Render an episode log step by step.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

/// Parses `argv`, runs the command, and returns the process exit code.
/// Output goes to `stdout`; diagnostics to stderr.
pub fn main_with<I, T>(argv: I, stdout: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(text) => {
            let _ = stdout.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => serde_json::from_slice(&read(p)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", p.display()))),
    }
}

fn load_env_file(path: &Path) -> Result<EnvGraph, CliError> {
    load_env(&read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn load_tasks(path: &Path, env: &EnvGraph) -> Result<Vec<Task>, CliError> {
    let text = String::from_utf8(read(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let tasks = tasks_from_jsonl(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    for t in &tasks {
        validate_task(env, t).map_err(|e| invalid(format!("task {}: {e}", t.task_id)))?;
    }
    Ok(tasks)
}

fn execute(cli: Cli) -> Result<String, CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::EnvGen {
            kind,
            width,
            height,
            landmarks,
            visible,
            blocked,
            seed,
            out,
        } => {
            let spec = SynthSpec {
                kind,
                width,
                height,
                blocked_fraction: blocked,
                landmark_count: landmarks,
                target_visible_fraction: visible,
                seed: seed.or(cfg.seed).unwrap_or(0),
            };
            let env = crate::env::gen_synthetic(&spec).map_err(invalid)?;
            write(&out, &env.to_json())?;
            Ok(format!(
                "wrote {} ({} nodes, {} edges, {} landmarks, visible fraction {:.3})\n",
                out.display(),
                env.node_count(),
                env.edge_count(),
                env.landmarks().len(),
                visible_fraction(&env)
            ))
        }
        Command::EnvValidate { env } => {
            let g = load_env_file(&env)?;
            Ok(format!(
                "ok: {} nodes, {} edges, {} landmarks, {} component(s), visible fraction {:.3}\n",
                g.node_count(),
                g.edge_count(),
                g.landmarks().len(),
                g.component_count(),
                visible_fraction(&g)
            ))
        }
        Command::TaskGen {
            env,
            n,
            mu,
            sigma,
            seed,
            out,
        } => {
            let g = load_env_file(&env)?;
            let tasks = sample_tasks(
                &g,
                n.or(cfg.n).unwrap_or(100),
                mu.or(cfg.mu).unwrap_or(30.0),
                sigma.or(cfg.sigma).unwrap_or(10.0),
                seed.or(cfg.seed).unwrap_or(0),
            )
            .map_err(invalid)?;
            write(&out, &tasks_to_jsonl(&tasks))?;
            let mean = tasks.iter().map(|t| t.min_steps as f64).sum::<f64>() / tasks.len() as f64;
            Ok(format!(
                "wrote {} tasks to {} (mean shortest path {:.2} steps)\n",
                tasks.len(),
                out.display(),
                mean
            ))
        }
        Command::Run {
            env,
            tasks,
            agent,
            perception,
            backend,
            seed,
            parallelism,
            transcript,
            record,
            out,
        } => {
            let g = load_env_file(&env)?;
            let tasks = load_tasks(&tasks, &g)?;
            let agents = if agent.is_empty() {
                cfg.agents.clone().unwrap_or_else(|| vec!["prep".to_string()])
            } else {
                agent
            };
            let registry = AgentRegistry::with_builtins();
            for a in &agents {
                if !registry.names().contains(&a.as_str()) {
                    return Err(CliError::Usage(format!(
                        "unknown agent '{a}' (known: {})",
                        registry.names().join(", ")
                    )));
                }
            }
            let mut pcfg = PerceptionConfig::for_env(&g);
            pcfg.distance_sigma = cfg.distance_sigma;
            pcfg.bearing_quantization_deg = cfg.bearing_quantization_deg;
            pcfg.remote = cfg.vlm_endpoint.clone().map(EndpointConfig::new);
            let perceiver = PerceiverRegistry::with_builtins()
                .build(perception.or(cfg.perception.clone()).as_deref().unwrap_or("oracle"), &pcfg)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let rcfg = ReasonerConfig {
                sampling: SamplingConfig {
                    model: cfg.model.clone().unwrap_or_else(|| SamplingConfig::default().model),
                    temperature: cfg.temperature.unwrap_or(0.0),
                },
                endpoint: cfg.lm_endpoint.clone().map(EndpointConfig::new),
                transcript: transcript.or(cfg.transcript.clone()),
            };
            let inner = ReasonerRegistry::with_builtins()
                .build(backend.or(cfg.backend.clone()).as_deref().unwrap_or("scripted"), &rcfg)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let reasoner: Arc<dyn Reasoner> = match record {
                Some(p) => Arc::new(RecordingReasoner::new(inner, &p).map_err(|e| CliError::Io {
                    path: p.clone(),
                    source: std::io::Error::other(e.to_string()),
                })?),
                None => Arc::from(inner),
            };
            let defaults = BatchOptions::default();
            let opts = BatchOptions {
                seed: seed.or(cfg.seed).unwrap_or(0),
                parallelism: parallelism.or(cfg.parallelism).unwrap_or(1),
                log_dir: Some(out.join("logs")),
                tau_steps: cfg.tau_steps.unwrap_or(defaults.tau_steps),
                summary_window: cfg.summary_window.unwrap_or(defaults.summary_window),
                retry_budget: cfg.retry_budget.unwrap_or(defaults.retry_budget),
            };
            let batch = run_batch(&g, &tasks, &agents, &registry, perceiver.as_ref(), reasoner, &opts)?;
            let report = &batch.report;
            write(&out.join("report.csv"), &report.to_csv())?;
            write(&out.join("episodes.csv"), &report.rows_csv())?;
            write(&out.join("report.md"), &report.to_table())?;
            let mut text = report.to_table();
            if batch.warnings > 0 {
                let _ = writeln!(text, "warning: {} episode(s) stopped on errors", batch.warnings);
            }
            Ok(text)
        }
        Command::Report { input, format } => {
            let report = BatchReport::from_results(&read_logs(&input)?)?;
            Ok(match format {
                ReportFormat::Table => report.to_table(),
                ReportFormat::Csv => report.to_csv(),
                ReportFormat::Json => report.to_json() + "\n",
            })
        }
        Command::Sweep { input, env, out } => {
            let g = load_env_file(&env)?;
            let results = read_logs(&input)?;
            let mut agents: Vec<String> = results.iter().map(|r| r.agent.clone()).collect();
            agents.sort();
            agents.dedup();
            let mut dist = String::from(DISTANCE_CSV_HEADER);
            let mut vis = String::from(VISIBILITY_CSV_HEADER);
            let mut text = String::new();
            for a in &agents {
                let mine: Vec<_> = results.iter().filter(|r| &r.agent == a).cloned().collect();
                dist.push_str(&distance_csv(a, &sweep_by_distance(&mine)?));
                let bins = sweep_by_visibility(&mine, &g)?;
                vis.push_str(&visibility_csv(a, &bins));
                let xs: Vec<f64> = bins.iter().map(|b| b.decile as f64).collect();
                let ys: Vec<f64> = bins.iter().map(|b| b.sr).collect();
                match spearman(&xs, &ys) {
                    Some(r) => {
                        let _ = writeln!(text, "{a}: visibility/SR Spearman {r:.3}");
                    }
                    None => {
                        let _ = writeln!(text, "{a}: visibility/SR Spearman undefined");
                    }
                }
            }
            write(&out.join("distance.csv"), &dist)?;
            write(&out.join("visibility.csv"), &vis)?;
            Ok(text)
        }
        Command::Replay { trace } => {
            let text = String::from_utf8(read(&trace)?).map_err(invalid)?;
            render_trace(&text).map_err(|e| invalid(format!("{}: {e}", trace.display())))
        }
    }
}

/// Human-readable rendering of an episode log.
pub fn render_trace(text: &str) -> Result<String, serde_json::Error> {
    let mut out = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if let Ok(r) = serde_json::from_str::<ResultLine>(line) {
            if r.kind == "result" {
                let r = r.result;
                let _ = writeln!(
                    out,
                    "{} {}: {} in {} steps (shortest {}, budget {}){}",
                    r.agent,
                    r.task_id,
                    if r.success { "reached goal" } else { "failed" },
                    r.steps_taken,
                    r.min_steps,
                    r.budget,
                    r.failure.map(|f| format!(" [{f}]")).unwrap_or_default()
                );
                continue;
            }
        }
        let s: TraceStep = serde_json::from_str(line)?;
        let est = s
            .estimate
            .map(|e| format!("goal ~({}, {}) {:?}", e.coord[0], e.coord[1], e.source).to_lowercase())
            .unwrap_or_else(|| "goal unknown".to_string());
        let roads: Vec<String> = s
            .connections
            .iter()
            .map(|c| format!("{}{}", c.dir, if c.visited { "*" } else { "" }))
            .collect();
        let _ = writeln!(
            out,
            "t={:<3} node {:<6} at ({}, {})  roads [{}]  seen {}  {}  -> {}",
            s.t,
            s.node,
            s.coord[0],
            s.coord[1],
            roads.join(" "),
            s.detections.len(),
            est,
            s.action
        );
        if let Some(step) = s.plan.get(s.cursor) {
            let _ = writeln!(out, "      plan: {step}");
        }
    }
    Ok(out)
}
