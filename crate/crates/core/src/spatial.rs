//! Goal-position estimation: landmark triangulation, fusion of repeated
//! estimates, dead-reckoning anticipation and compass labelling.
//!
//! Agent-frame coordinates are step-grid offsets from the episode start node.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{normalize_bearing, Coord, Octant, RelPos};

/// Default clustering radius for fusion, in steps.
pub const DEFAULT_TAU_STEPS: f64 = 10.0;

/// Offset from an octant center beyond which a "more towards" qualifier is added.
pub const QUALIFIER_THRESHOLD_DEG: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    #[error("no prior goal estimate to anticipate from")]
    NoPriorEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateSource {
    Perceived,
    Anticipated,
    Fused,
}

impl fmt::Display for EstimateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimateSource::Perceived => "perceived",
            EstimateSource::Anticipated => "anticipated",
            EstimateSource::Fused => "fused",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalEstimate {
    pub coord: Coord,
    pub source: EstimateSource,
    pub step: u32,
}

impl GoalEstimate {
    pub fn new(coord: Coord, source: EstimateSource, step: u32) -> Self {
        GoalEstimate { coord, source, step }
    }
}

/// Goal relative to the agent from the landmark as seen by the agent and the
/// goal as described relative to that landmark.
///
/// The two relations are summed as east/north vectors, which is the law of
/// cosines applied to the agent-landmark-goal triangle.
pub fn triangulate_goal(landmark_rel: RelPos, goal_rel_lm: RelPos) -> RelPos {
    if goal_rel_lm.distance_m == 0.0 {
        return landmark_rel;
    }
    let (e1, n1) = landmark_rel.to_vector_m();
    let (e2, n2) = goal_rel_lm.to_vector_m();
    RelPos::from_vector_m(e1 + e2, n1 + n2)
}

/// Ordering key that makes fusion independent of history order.
fn recency_key(e: &GoalEstimate) -> (u32, f64, f64) {
    (e.step, e.coord.x, e.coord.y)
}

fn cmp_recency(a: &GoalEstimate, b: &GoalEstimate) -> Ordering {
    let (sa, xa, ya) = recency_key(a);
    let (sb, xb, yb) = recency_key(b);
    sa.cmp(&sb).then(xa.total_cmp(&xb)).then(ya.total_cmp(&yb))
}

/// Fuses a history of goal estimates into one integer coordinate.
///
/// Picks the largest set of estimates whose pairwise distances are all within
/// `tau_steps`, preferring the set holding the most recent estimate on ties, and
/// returns its rounded component-wise mean. An empty history yields `None`.
pub fn fuse_estimates(history: &[GoalEstimate], tau_steps: f64) -> Option<Coord> {
    let cluster = largest_cluster(history, tau_steps)?;
    let mut members: Vec<&GoalEstimate> = cluster.iter().map(|&i| &history[i]).collect();
    members.sort_by(|a, b| cmp_recency(a, b));
    let n = members.len() as f64;
    let sum = members.iter().fold(Coord::ORIGIN, |acc, e| acc + e.coord);
    Some(sum.scale(1.0 / n).rounded())
}

/// Indices of the selected cluster, see [`fuse_estimates`].
pub fn largest_cluster(history: &[GoalEstimate], tau_steps: f64) -> Option<Vec<usize>> {
    if history.is_empty() {
        return None;
    }
    let n = history.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| i != j && history[i].coord.distance(history[j].coord) <= tau_steps)
                .collect()
        })
        .collect();

    let mut best: Option<Vec<usize>> = None;
    let mut consider = |clique: Vec<usize>| {
        let better = match &best {
            None => true,
            Some(cur) => compare_cliques(history, &clique, cur) == Ordering::Greater,
        };
        if better {
            best = Some(clique);
        }
    };
    bron_kerbosch(&adj, Vec::new(), (0..n).collect(), Vec::new(), &mut consider);
    best
}

fn compare_cliques(history: &[GoalEstimate], a: &[usize], b: &[usize]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        let sorted = |c: &[usize]| {
            let mut v: Vec<&GoalEstimate> = c.iter().map(|&i| &history[i]).collect();
            v.sort_by(|x, y| cmp_recency(y, x));
            v
        };
        let (ra, rb) = (sorted(a), sorted(b));
        for (x, y) in ra.iter().zip(rb.iter()) {
            match cmp_recency(x, y) {
                Ordering::Equal => continue,
                other => return other,
            }
        }
        Ordering::Equal
    })
}

/// Maximal-clique enumeration with pivoting.
fn bron_kerbosch(
    adj: &[Vec<bool>],
    r: Vec<usize>,
    p: Vec<usize>,
    x: Vec<usize>,
    out: &mut impl FnMut(Vec<usize>),
) {
    if p.is_empty() && x.is_empty() {
        out(r);
        return;
    }
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| p.iter().filter(|&&v| adj[u][v]).count())
        .expect("p or x non-empty");
    let candidates: Vec<usize> = p.iter().copied().filter(|&v| !adj[pivot][v]).collect();
    let mut p = p;
    let mut x = x;
    for v in candidates {
        let mut r2 = r.clone();
        r2.push(v);
        let p2 = p.iter().copied().filter(|&u| adj[v][u]).collect();
        let x2 = x.iter().copied().filter(|&u| adj[v][u]).collect();
        bron_kerbosch(adj, r2, p2, x2, out);
        p.retain(|&u| u != v);
        x.push(v);
    }
}

/// Dead-reckoned goal direction when no landmark is in view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anticipation {
    /// The held goal hypothesis, re-tagged as anticipated.
    pub estimate: GoalEstimate,
    /// Goal minus current position, in steps.
    pub delta: Coord,
    pub label: CompassLabel,
}

/// Holds the last goal hypothesis fixed in the agent frame and re-derives its
/// direction from the current position.
pub fn anticipate_goal(
    last: Option<&GoalEstimate>,
    current: Coord,
    step: u32,
) -> Result<Anticipation, SpatialError> {
    let last = last.ok_or(SpatialError::NoPriorEstimate)?;
    let delta = last.coord - current;
    Ok(Anticipation {
        estimate: GoalEstimate::new(last.coord, EstimateSource::Anticipated, step),
        delta,
        label: classify_direction(delta),
    })
}

/// Compass label such as "Southeast (more towards south)".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompassLabel {
    pub octant: Octant,
    /// Neighboring cardinal the exact bearing leans toward.
    pub qualifier: Option<Octant>,
    /// Set for a zero displacement; `octant` is then N by convention.
    pub at_goal: bool,
}

impl fmt::Display for CompassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.at_goal {
            return f.write_str("at the current position");
        }
        match self.qualifier {
            Some(q) => write!(f, "{} (more towards {})", self.octant.word(), q.lower_word()),
            None => f.write_str(self.octant.word()),
        }
    }
}

pub fn classify_direction(delta: Coord) -> CompassLabel {
    if delta.is_zero() {
        return CompassLabel {
            octant: Octant::N,
            qualifier: None,
            at_goal: true,
        };
    }
    let bearing = delta.bearing_deg();
    let octant = Octant::from_bearing(bearing);
    let mut offset = normalize_bearing(bearing - octant.center_deg());
    if offset > 180.0 {
        offset -= 360.0;
    }
    let reach = if octant.is_cardinal() { 2 } else { 1 };
    let qualifier = if offset > QUALIFIER_THRESHOLD_DEG {
        Some(octant.rotate(reach))
    } else if offset < -QUALIFIER_THRESHOLD_DEG {
        Some(octant.rotate(-reach))
    } else {
        None
    };
    CompassLabel {
        octant,
        qualifier,
        at_goal: false,
    }
}

/// Axis components of a displacement, e.g. "South 43 steps, East 34 steps".
pub fn component_phrase(delta: Coord) -> String {
    let d = delta.rounded();
    let mut parts = Vec::new();
    if d.y != 0.0 {
        let dir = if d.y > 0.0 { "North" } else { "South" };
        parts.push(format!("{dir} {} steps", d.y.abs() as i64));
    }
    if d.x != 0.0 {
        let dir = if d.x > 0.0 { "East" } else { "West" };
        parts.push(format!("{dir} {} steps", d.x.abs() as i64));
    }
    if parts.is_empty() {
        "0 steps away".to_string()
    } else {
        parts.join(", ")
    }
}

/// Inverse of [`component_phrase`].
pub fn parse_component_phrase(text: &str) -> Option<Coord> {
    let re = regex::Regex::new(r"(?i)\b(north|south|east|west)\s+(\d+(?:\.\d+)?)\s+steps?").ok()?;
    let mut delta = Coord::ORIGIN;
    let mut any = false;
    for cap in re.captures_iter(text) {
        let v: f64 = cap[2].parse().ok()?;
        any = true;
        match cap[1].to_ascii_lowercase().as_str() {
            "north" => delta.y += v,
            "south" => delta.y -= v,
            "east" => delta.x += v,
            _ => delta.x -= v,
        }
    }
    if any || text.contains("0 steps away") {
        Some(delta)
    } else {
        None
    }
}
