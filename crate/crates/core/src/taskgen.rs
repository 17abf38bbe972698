//! Navigation task sampling and landmark-relative goal descriptions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, EnvGraph, LandmarkId, NodeId};
use crate::geom::{rel_pos, RelPos};

/// Shortest allowed task, in steps.
pub const MIN_TASK_STEPS: u32 = 5;
/// Start draws per task before settling for the nearest achievable distance.
pub const RETRY_CAP: usize = 200;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("environment has no landmarks")]
    NoLandmarks,
    #[error("environment is disconnected")]
    Disconnected,
    #[error("no node sees a landmark, so no goal can be described")]
    NoGoalCandidate,
    #[error("goal node {0} sees no landmark")]
    GoalNotVisible(NodeId),
    #[error("invalid sampling parameters: {0}")]
    InvalidParams(String),
    #[error("unknown landmark id {0}")]
    UnknownLandmark(LandmarkId),
    #[error("task {task}: {reason}")]
    Invalid { task: String, reason: String },
    #[error("malformed task line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Goal seen from a landmark that is visible at the goal node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalAnchor {
    pub landmark: LandmarkId,
    /// Goal as seen from the landmark.
    pub rel: RelPos,
}

/// Landmark `b` as seen from landmark `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkLink {
    pub a: LandmarkId,
    pub b: LandmarkId,
    pub rel: RelPos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalDescription {
    pub r1: Vec<GoalAnchor>,
    pub r2: Vec<LandmarkLink>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub task_id: String,
    pub start: NodeId,
    pub goal: NodeId,
    pub description: GoalDescription,
    pub min_steps: u32,
    pub budget: u32,
}

/// Step limit: two and a half times the shortest path, rounded up.
pub fn budget_for(min_steps: u32) -> u32 {
    (5 * min_steps).div_ceil(2)
}

pub fn describe_goal(env: &EnvGraph, goal: NodeId) -> Result<GoalDescription, TaskError> {
    let goal_coord = env.coord(goal)?;
    let visible = env.visible_landmarks(goal)?;
    if visible.is_empty() {
        return Err(TaskError::GoalNotVisible(goal));
    }
    let r1 = visible
        .iter()
        .map(|(lm, _)| GoalAnchor {
            landmark: lm.id,
            rel: rel_pos(lm.coord, goal_coord),
        })
        .collect();
    let lms = env.landmarks();
    let mut r2 = Vec::with_capacity(lms.len() * lms.len().saturating_sub(1) / 2);
    for (i, a) in lms.iter().enumerate() {
        for b in &lms[i + 1..] {
            r2.push(LandmarkLink {
                a: a.id,
                b: b.id,
                rel: rel_pos(a.coord, b.coord),
            });
        }
    }
    Ok(GoalDescription { r1, r2 })
}

/// Distance rounded to the nearest 10 m for text.
pub fn approx_meters(distance_m: f64) -> i64 {
    ((distance_m / 10.0).round() * 10.0) as i64
}

/// One sentence per relation, joined with ". ".
pub fn render_description(
    d: &GoalDescription,
    names: &BTreeMap<LandmarkId, String>,
) -> Result<String, TaskError> {
    let name = |id: LandmarkId| names.get(&id).ok_or(TaskError::UnknownLandmark(id));
    let mut sentences = Vec::new();
    for a in &d.r1 {
        sentences.push(format!(
            "the destination is approximately {} meters {} from the {}",
            approx_meters(a.rel.distance_m),
            a.rel.octant().lower_word(),
            name(a.landmark)?
        ));
    }
    for l in &d.r2 {
        sentences.push(format!(
            "the {} is approximately {} meters {} from the {}",
            name(l.b)?,
            approx_meters(l.rel.distance_m),
            l.rel.octant().lower_word(),
            name(l.a)?
        ));
    }
    Ok(sentences.join(". "))
}

pub fn landmark_names(env: &EnvGraph) -> BTreeMap<LandmarkId, String> {
    env.landmarks().iter().map(|l| (l.id, l.name.clone())).collect()
}

/// Samples `n` tasks whose shortest-path lengths follow a rounded normal
/// distribution clamped at [`MIN_TASK_STEPS`]. Goals are restricted to nodes
/// that see a landmark.
pub fn sample_tasks(
    env: &EnvGraph,
    n: usize,
    mu: f64,
    sigma: f64,
    seed: u64,
) -> Result<Vec<Task>, TaskError> {
    if env.landmarks().is_empty() {
        return Err(TaskError::NoLandmarks);
    }
    if n == 0 || mu.is_nan() || mu <= 0.0 || sigma.is_nan() || sigma < 0.0 {
        return Err(TaskError::InvalidParams(format!("n={n} mu={mu} sigma={sigma}")));
    }
    if !env.is_connected() {
        return Err(TaskError::Disconnected);
    }
    let nodes = env.nodes();
    let goal_ok: Vec<bool> = nodes
        .iter()
        .map(|nd| env.sees_any_landmark(nd.id))
        .collect::<Result<_, _>>()?;
    if !goal_ok.iter().any(|&v| v) {
        return Err(TaskError::NoGoalCandidate);
    }

    let normal = Normal::new(mu, sigma).map_err(|e| TaskError::InvalidParams(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(n);
    for k in 0..n {
        let draw = normal.sample(&mut rng).round().max(MIN_TASK_STEPS as f64) as u32;
        let mut fallback: Option<(u32, usize, usize)> = None;
        let mut chosen = None;
        for _ in 0..RETRY_CAP {
            let s = rng.random_range(0..nodes.len());
            let dist = env.bfs_distances(nodes[s].id)?;
            let exact: Vec<usize> = (0..nodes.len())
                .filter(|&g| goal_ok[g] && dist[g] == Some(draw))
                .collect();
            if !exact.is_empty() {
                chosen = Some((s, exact[rng.random_range(0..exact.len())]));
                break;
            }
            for g in 0..nodes.len() {
                if let (true, Some(d)) = (goal_ok[g], dist[g]) {
                    if d == 0 {
                        continue;
                    }
                    let gap = d.abs_diff(draw);
                    if fallback.is_none_or(|(best, _, _)| gap < best) {
                        fallback = Some((gap, s, g));
                    }
                }
            }
        }
        let (s, g) = match chosen {
            Some(pair) => pair,
            None => {
                let (_, s, g) = fallback.ok_or(TaskError::NoGoalCandidate)?;
                (s, g)
            }
        };
        let (start, goal) = (nodes[s].id, nodes[g].id);
        let min_steps = env
            .shortest_path_len(start, goal)?
            .ok_or(TaskError::Disconnected)?;
        tasks.push(Task {
            task_id: format!("task-{k:04}"),
            start,
            goal,
            description: describe_goal(env, goal)?,
            min_steps,
            budget: budget_for(min_steps),
        });
    }
    Ok(tasks)
}

/// Checks a task against the environment it claims to belong to.
pub fn validate_task(env: &EnvGraph, task: &Task) -> Result<(), TaskError> {
    let bad = |reason: String| TaskError::Invalid {
        task: task.task_id.clone(),
        reason,
    };
    if task.start == task.goal {
        return Err(bad("start equals goal".into()));
    }
    let l = env
        .shortest_path_len(task.start, task.goal)?
        .ok_or_else(|| bad("goal unreachable from start".into()))?;
    if l != task.min_steps {
        return Err(bad(format!("min_steps {} but shortest path is {l}", task.min_steps)));
    }
    if task.budget != budget_for(l) {
        return Err(bad(format!("budget {} but expected {}", task.budget, budget_for(l))));
    }
    if task.description.r1.is_empty() {
        return Err(bad("empty goal description".into()));
    }
    for a in &task.description.r1 {
        env.landmark(a.landmark).ok_or(TaskError::UnknownLandmark(a.landmark))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub start: u64,
    pub goal: u64,
    pub min_steps: u32,
    pub budget: u32,
    pub r1: Vec<R1Record>,
    pub r2: Vec<R2Record>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R1Record {
    pub lm: u64,
    pub bearing_deg: f64,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R2Record {
    pub a: u64,
    pub b: u64,
    pub bearing_deg: f64,
    pub distance_m: f64,
}

impl From<&Task> for TaskRecord {
    fn from(t: &Task) -> Self {
        TaskRecord {
            task_id: t.task_id.clone(),
            start: t.start.0,
            goal: t.goal.0,
            min_steps: t.min_steps,
            budget: t.budget,
            r1: t
                .description
                .r1
                .iter()
                .map(|a| R1Record {
                    lm: a.landmark.0,
                    bearing_deg: a.rel.bearing_deg,
                    distance_m: a.rel.distance_m,
                })
                .collect(),
            r2: t
                .description
                .r2
                .iter()
                .map(|l| R2Record {
                    a: l.a.0,
                    b: l.b.0,
                    bearing_deg: l.rel.bearing_deg,
                    distance_m: l.rel.distance_m,
                })
                .collect(),
        }
    }
}

impl From<TaskRecord> for Task {
    fn from(r: TaskRecord) -> Self {
        Task {
            task_id: r.task_id,
            start: NodeId(r.start),
            goal: NodeId(r.goal),
            min_steps: r.min_steps,
            budget: r.budget,
            description: GoalDescription {
                r1: r
                    .r1
                    .into_iter()
                    .map(|a| GoalAnchor {
                        landmark: LandmarkId(a.lm),
                        rel: RelPos::new(a.bearing_deg, a.distance_m),
                    })
                    .collect(),
                r2: r
                    .r2
                    .into_iter()
                    .map(|l| LandmarkLink {
                        a: LandmarkId(l.a),
                        b: LandmarkId(l.b),
                        rel: RelPos::new(l.bearing_deg, l.distance_m),
                    })
                    .collect(),
            },
        }
    }
}

pub fn tasks_to_jsonl(tasks: &[Task]) -> String {
    let mut out = String::new();
    for t in tasks {
        out.push_str(&serde_json::to_string(&TaskRecord::from(t)).expect("task serializes"));
        out.push('\n');
    }
    out
}

pub fn tasks_from_jsonl(text: &str) -> Result<Vec<Task>, TaskError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<TaskRecord>(l)
                .map(Task::from)
                .map_err(|source| TaskError::Parse { line: i + 1, source })
        })
        .collect()
}
