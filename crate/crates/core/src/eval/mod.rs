//! Batch runs, SR/SPL aggregation, sweeps and report rendering.

pub mod cli;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    result_from_jsonl, run_episode, AgentKind, AgentRegistry, AgentSetup, Episode, EpisodeResult,
};
use crate::env::{EnvError, EnvGraph};
use crate::lm::Reasoner;
use crate::perception::Perceiver;
use crate::spatial::DEFAULT_TAU_STEPS;
use crate::taskgen::Task;

/// Width of a distance bin in steps.
pub const DISTANCE_BIN_STEPS: u32 = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("min_steps must be at least 1, got {0}")]
    BadMinSteps(u32),
    #[error("no episodes to report on")]
    EmptyReport,
    #[error("episode {0} has no recorded path")]
    MissingPath(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: no result line")]
    BadLog { path: PathBuf },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Success weighted by path length for one episode: `l / max(p, l)` on
/// success, 0 otherwise.
pub fn spl(success: bool, min_steps: u32, steps_taken: u32) -> Result<f64, EvalError> {
    if min_steps == 0 {
        return Err(EvalError::BadMinSteps(min_steps));
    }
    if !success {
        return Ok(0.0);
    }
    Ok(min_steps as f64 / steps_taken.max(min_steps) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub agent: String,
    pub task_id: String,
    pub success: bool,
    pub steps_taken: u32,
    pub min_steps: u32,
    pub spl: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: String,
    pub episodes: usize,
    pub successes: usize,
    /// Percent.
    pub sr: f64,
    /// Percent.
    pub spl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub agents: Vec<AgentSummary>,
    pub rows: Vec<EpisodeRow>,
}

/// Known kinds in their usual table order, then anything else by name.
fn agent_order(name: &str) -> (usize, String) {
    let pos = AgentKind::ALL
        .iter()
        .position(|k| k.name() == name)
        .unwrap_or(AgentKind::ALL.len());
    (pos, name.to_string())
}

fn table_label(name: &str) -> String {
    name.parse::<AgentKind>()
        .map(|k| k.label().to_string())
        .unwrap_or_else(|_| name.to_string())
}

impl BatchReport {
    pub fn from_results(results: &[EpisodeResult]) -> Result<BatchReport, EvalError> {
        let mut rows = results
            .iter()
            .map(|r| {
                Ok(EpisodeRow {
                    agent: r.agent.clone(),
                    task_id: r.task_id.clone(),
                    success: r.success,
                    steps_taken: r.steps_taken,
                    min_steps: r.min_steps,
                    spl: spl(r.success, r.min_steps, r.steps_taken)?,
                    failure: r.failure.clone(),
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        rows.sort_by(|a, b| {
            agent_order(&a.agent)
                .cmp(&agent_order(&b.agent))
                .then_with(|| a.task_id.cmp(&b.task_id))
        });
        let mut grouped: BTreeMap<(usize, String), Vec<&EpisodeRow>> = BTreeMap::new();
        for r in &rows {
            grouped.entry(agent_order(&r.agent)).or_default().push(r);
        }
        let agents = grouped
            .into_iter()
            .map(|((_, agent), rs)| {
                let n = rs.len();
                let successes = rs.iter().filter(|r| r.success).count();
                let spl_sum: f64 = rs.iter().map(|r| r.spl).sum();
                AgentSummary {
                    agent,
                    episodes: n,
                    successes,
                    sr: 100.0 * successes as f64 / n as f64,
                    spl: 100.0 * spl_sum / n as f64,
                }
            })
            .collect();
        Ok(BatchReport { agents, rows })
    }

    pub fn summary(&self, agent: &str) -> Option<&AgentSummary> {
        self.agents.iter().find(|a| a.agent == agent)
    }

    /// Markdown table with columns Methods | SR(%) | SPL(%).
    pub fn to_table(&self) -> String {
        let mut out = String::from("| Methods | SR(%) | SPL(%) |\n|---|---:|---:|\n");
        for a in &self.agents {
            let _ = writeln!(out, "| {} | {:.2} | {:.2} |", table_label(&a.agent), a.sr, a.spl);
        }
        out
    }

    /// One line per agent: agent,episodes,successes,sr_pct,spl_pct.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent,episodes,successes,sr_pct,spl_pct\n");
        for a in &self.agents {
            let _ = writeln!(out, "{},{},{},{:.2},{:.2}", a.agent, a.episodes, a.successes, a.sr, a.spl);
        }
        out
    }

    /// One line per episode: agent,task_id,success,steps_taken,min_steps,spl.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("agent,task_id,success,steps_taken,min_steps,spl\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6}",
                r.agent, r.task_id, r.success as u8, r.steps_taken, r.min_steps, r.spl
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub seed: u64,
    pub parallelism: usize,
    /// Episode logs go to `<log_dir>/<agent>/<task_id>.jsonl` when set.
    pub log_dir: Option<PathBuf>,
    pub tau_steps: f64,
    pub summary_window: usize,
    pub retry_budget: u32,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            seed: 0,
            parallelism: 1,
            log_dir: None,
            tau_steps: DEFAULT_TAU_STEPS,
            summary_window: crate::memory::SUMMARY_WINDOW,
            retry_budget: crate::agents::DEFAULT_RETRY_BUDGET,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub report: BatchReport,
    pub episodes: Vec<Episode>,
    /// Episodes that stopped on an error rather than the budget.
    pub warnings: usize,
}

impl BatchOutput {
    pub fn results(&self) -> Vec<EpisodeResult> {
        self.episodes.iter().map(|e| e.result.clone()).collect()
    }
}

fn failed_episode(task: &Task, agent: &str, cause: String) -> Episode {
    Episode {
        result: EpisodeResult {
            task_id: task.task_id.clone(),
            agent: agent.to_string(),
            success: false,
            steps_taken: 0,
            min_steps: task.min_steps,
            budget: task.budget,
            path: vec![task.start],
            failure: Some(cause),
        },
        trace: Vec::new(),
    }
}

/// Runs every (agent, task) pair on a pool of `parallelism` workers. Results
/// come back in (agent, task) order whatever the scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    env: &EnvGraph,
    tasks: &[Task],
    agents: &[String],
    registry: &AgentRegistry,
    perceiver: &dyn Perceiver,
    reasoner: Arc<dyn Reasoner>,
    opts: &BatchOptions,
) -> Result<BatchOutput, EvalError> {
    let jobs: Vec<(&String, &Task)> = agents
        .iter()
        .flat_map(|a| tasks.iter().map(move |t| (a, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let run_one = |(agent, task): &(&String, &Task)| -> Result<Episode, EvalError> {
        let setup = AgentSetup {
            tau_steps: opts.tau_steps,
            summary_window: opts.summary_window,
            retry_budget: opts.retry_budget,
            ..AgentSetup::new(&task.description, reasoner.clone())
        };
        let ep = registry
            .build(agent, &setup)
            .and_then(|mut a| run_episode(env, task, a.as_mut(), perceiver, opts.seed))
            .unwrap_or_else(|e| {
                log::warn!("episode {} ({agent}) failed: {e}", task.task_id);
                failed_episode(task, agent, e.to_string())
            });
        if let Some(dir) = &opts.log_dir {
            let sub = dir.join(agent.as_str());
            fs::create_dir_all(&sub).map_err(io_err(&sub))?;
            let path = sub.join(format!("{}.jsonl", task.task_id));
            fs::write(&path, ep.to_jsonl()).map_err(io_err(&path))?;
        }
        Ok(ep)
    };
    let episodes: Vec<Episode> = pool.install(|| {
        jobs.par_iter()
            .map(run_one)
            .collect::<Result<Vec<_>, EvalError>>()
    })?;
    let warnings = episodes.iter().filter(|e| e.result.failure.is_some()).count();
    let results: Vec<EpisodeResult> = episodes.iter().map(|e| e.result.clone()).collect();
    Ok(BatchOutput {
        report: BatchReport::from_results(&results)?,
        episodes,
        warnings,
    })
}

/// Result lines of every `*.jsonl` log under `dir`, in path order.
pub fn read_logs(dir: &Path) -> Result<Vec<EpisodeResult>, EvalError> {
    let mut files = Vec::new();
    collect_logs(dir, &mut files)?;
    files.sort();
    files
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            result_from_jsonl(&text).ok_or_else(|| EvalError::BadLog { path: p.clone() })
        })
        .collect()
}

fn collect_logs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), EvalError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect_logs(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBin {
    pub lo: u32,
    pub hi: u32,
    pub episodes: usize,
    pub successes: usize,
    pub sr: f64,
    /// Mean steps_taken / min_steps over successful episodes.
    pub mean_path_ratio: Option<f64>,
}

/// SR and mean p/l per 10-step band of shortest-path length.
pub fn sweep_by_distance(results: &[EpisodeResult]) -> Result<Vec<DistanceBin>, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let mut bins: BTreeMap<u32, Vec<&EpisodeResult>> = BTreeMap::new();
    for r in results {
        bins.entry(r.min_steps / DISTANCE_BIN_STEPS).or_default().push(r);
    }
    Ok(bins
        .into_iter()
        .map(|(k, rs)| {
            let wins: Vec<&&EpisodeResult> = rs.iter().filter(|r| r.success).collect();
            let ratio = (!wins.is_empty()).then(|| {
                wins.iter()
                    .map(|r| r.steps_taken as f64 / r.min_steps as f64)
                    .sum::<f64>()
                    / wins.len() as f64
            });
            DistanceBin {
                lo: k * DISTANCE_BIN_STEPS,
                hi: (k + 1) * DISTANCE_BIN_STEPS,
                episodes: rs.len(),
                successes: wins.len(),
                sr: 100.0 * wins.len() as f64 / rs.len() as f64,
                mean_path_ratio: ratio,
            }
        })
        .collect())
}

/// Fraction of path nodes that see at least one landmark (ground truth).
pub fn path_visibility(env: &EnvGraph, r: &EpisodeResult) -> Result<f64, EvalError> {
    if r.path.is_empty() {
        return Err(EvalError::MissingPath(r.task_id.clone()));
    }
    let mut seen = 0usize;
    for &n in &r.path {
        if env.sees_any_landmark(n)? {
            seen += 1;
        }
    }
    Ok(seen as f64 / r.path.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityBin {
    /// Decile index 0..=9; the last decile includes 1.0.
    pub decile: u32,
    pub episodes: usize,
    pub successes: usize,
    pub sr: f64,
}

/// SR per decile of path visibility. Only populated deciles are returned.
pub fn sweep_by_visibility(
    results: &[EpisodeResult],
    env: &EnvGraph,
) -> Result<Vec<VisibilityBin>, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let mut bins: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for r in results {
        let f = path_visibility(env, r)?;
        let d = ((f * 10.0).floor() as u32).min(9);
        let e = bins.entry(d).or_default();
        e.0 += 1;
        e.1 += r.success as usize;
    }
    Ok(bins
        .into_iter()
        .map(|(decile, (n, s))| VisibilityBin {
            decile,
            episodes: n,
            successes: s,
            sr: 100.0 * s as f64 / n as f64,
        })
        .collect())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with tied values given their average rank.
/// `None` when either side is constant or fewer than two points are given.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

pub fn distance_csv(agent: &str, bins: &[DistanceBin]) -> String {
    let mut out = String::new();
    for b in bins {
        let ratio = b.mean_path_ratio.map(|r| format!("{r:.4}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{agent},{},{},{},{},{:.2},{ratio}",
            b.lo, b.hi, b.episodes, b.successes, b.sr
        );
    }
    out
}

pub const DISTANCE_CSV_HEADER: &str = "agent,bin_lo,bin_hi,episodes,successes,sr_pct,mean_path_ratio\n";
pub const VISIBILITY_CSV_HEADER: &str = "agent,decile_lo,decile_hi,episodes,successes,sr_pct\n";

pub fn visibility_csv(agent: &str, bins: &[VisibilityBin]) -> String {
    let mut out = String::new();
    for b in bins {
        let _ = writeln!(
            out,
            "{agent},{:.1},{:.1},{},{},{:.2}",
            b.decile as f64 / 10.0,
            (b.decile + 1) as f64 / 10.0,
            b.episodes,
            b.successes,
            b.sr
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::NodeId;

    fn res(agent: &str, id: &str, success: bool, p: u32, l: u32) -> EpisodeResult {
        EpisodeResult {
            task_id: id.into(),
            agent: agent.into(),
            success,
            steps_taken: p,
            min_steps: l,
            budget: (5 * l).div_ceil(2),
            path: vec![NodeId(0)],
            failure: None,
        }
    }

    #[test]
    fn spl_examples() {
        assert_eq!(spl(true, 30, 30).unwrap(), 1.0);
        assert!((spl(true, 30, 45).unwrap() - 0.6667).abs() < 1e-4);
        assert_eq!(spl(false, 30, 12).unwrap(), 0.0);
        assert!(matches!(spl(true, 0, 3), Err(EvalError::BadMinSteps(0))));
    }

    #[test]
    fn zero_successes_report_zero() {
        let r = BatchReport::from_results(&[res("random", "a", false, 10, 5)]).unwrap();
        assert_eq!(r.agents[0].sr, 0.0);
        assert_eq!(r.agents[0].spl, 0.0);
    }

    #[test]
    fn table_has_expected_shape() {
        let r = BatchReport::from_results(&[
            res("react", "a", true, 10, 10),
            res("prep", "a", true, 20, 10),
            res("prep", "b", false, 25, 10),
        ])
        .unwrap();
        assert_eq!(
            r.to_table(),
            "| Methods | SR(%) | SPL(%) |\n|---|---:|---:|\n| PReP | 50.00 | 25.00 |\n| React | 100.00 | 100.00 |\n"
        );
    }

    #[test]
    fn distance_bins_report_path_ratio() {
        let bins = sweep_by_distance(&[res("prep", "a", true, 10, 10), res("prep", "b", true, 30, 20)]).unwrap();
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0].mean_path_ratio, Some(1.0));
        assert_eq!(bins[1].mean_path_ratio, Some(1.5));
        let one = sweep_by_distance(&[res("prep", "a", true, 12, 12), res("prep", "b", false, 30, 12)]).unwrap();
        assert_eq!(one.len(), 1);
        assert!(sweep_by_distance(&[]).is_err());
    }

    #[test]
    fn spearman_handles_ties() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]).unwrap();
        // Ranks y = [1.5, 1.5, 3, 4].
        let expected = 4.5 / (5.0f64 * 4.5).sqrt();
        assert!((r - expected).abs() < 1e-12);
    }
}
