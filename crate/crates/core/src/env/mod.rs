//! The urban environment: an undirected road graph with step-grid coordinates,
//! street-view references and landmark buildings.
//!
//! An [`EnvGraph`] is immutable once built and is shared read-only by every
//! episode that runs on it.

mod file;
mod synth;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::geom::{rel_pos, Coord, RelPos, STEP_M};
use crate::geom::Octant;
pub use file::{load_env, EnvFile, FileEdge, FileLandmark, FileNode};
pub use synth::{gen_synthetic, visible_fraction, SynthKind, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LandmarkId(pub u64);

impl fmt::Display for LandmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("malformed environment file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("environment has no nodes")]
    Empty,
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate landmark id {0}")]
    DuplicateLandmark(LandmarkId),
    #[error("landmark id {0} collides with a node id")]
    LandmarkIdCollision(LandmarkId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("edge [{a}, {b}] references missing node {missing}")]
    DanglingEdge { a: u64, b: u64, missing: u64 },
    #[error("asymmetric adjacency: {from} lists {to} but not the reverse")]
    AsymmetricEdge { from: NodeId, to: NodeId },
    #[error("landmark {landmark} has non-positive visibility radius {radius}")]
    BadRadius { landmark: LandmarkId, radius: f64 },
    #[error("non-finite coordinate on {0}")]
    NonFinite(String),
    #[error("node {node} has {images} street views but degree {degree}")]
    TooManyStreetviews { node: NodeId, images: usize, degree: usize },
    #[error("unsupported step size {0} m (expected 50)")]
    BadStepSize(f64),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("invalid generator parameters: {0}")]
    InvalidSpec(String),
    #[error("target visible fraction {target} infeasible: {reason}")]
    InfeasibleVisibility { target: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvMeta {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub city: Option<String>,
    #[serde(default = "default_step_m")]
    pub step_m: f64,
}

fn default_step_m() -> f64 {
    STEP_M
}

impl EnvMeta {
    pub fn named(name: impl Into<String>) -> Self {
        EnvMeta {
            name: name.into(),
            city: None,
            step_m: STEP_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub coord: Coord,
    /// Opaque image references, one per incident direction when populated.
    pub streetviews: Vec<String>,
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: LandmarkId,
    pub name: String,
    pub coord: Coord,
    pub visibility_radius_m: f64,
}

/// One outgoing road from a node, labelled by compass octant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connection {
    pub dir: Octant,
    pub node: NodeId,
    pub coord: Coord,
}

/// Node description before adjacency is attached.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub coord: Coord,
    pub streetviews: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EnvGraph {
    meta: EnvMeta,
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    adjacency: Vec<Vec<usize>>,
    landmarks: Vec<Landmark>,
}

impl EnvGraph {
    /// Builds a graph from explicit adjacency lists, which must already be symmetric.
    pub fn from_adjacency(
        meta: EnvMeta,
        nodes: Vec<NodeSpec>,
        adjacency: &BTreeMap<NodeId, Vec<NodeId>>,
        landmarks: Vec<Landmark>,
    ) -> Result<Self, EnvError> {
        for (&from, list) in adjacency {
            for &to in list {
                let back = adjacency.get(&to).map(|l| l.contains(&from)).unwrap_or(false);
                if !back && to != from {
                    return Err(EnvError::AsymmetricEdge { from, to });
                }
            }
        }
        let edges: Vec<(NodeId, NodeId)> = adjacency
            .iter()
            .flat_map(|(&a, list)| list.iter().map(move |&b| (a, b)))
            .collect();
        Self::from_edges(meta, nodes, &edges, landmarks)
    }

    /// Builds a graph from an undirected edge list; each pair may appear in either
    /// or both orientations.
    pub fn from_edges(
        meta: EnvMeta,
        nodes: Vec<NodeSpec>,
        edges: &[(NodeId, NodeId)],
        landmarks: Vec<Landmark>,
    ) -> Result<Self, EnvError> {
        if meta.step_m != STEP_M {
            return Err(EnvError::BadStepSize(meta.step_m));
        }
        if nodes.is_empty() {
            return Err(EnvError::Empty);
        }
        let mut nodes = nodes;
        nodes.sort_by_key(|n| n.id);
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !n.coord.is_finite() {
                return Err(EnvError::NonFinite(format!("node {}", n.id)));
            }
            if index.insert(n.id, i).is_some() {
                return Err(EnvError::DuplicateNode(n.id));
            }
        }

        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for &(a, b) in edges {
            let ia = *index.get(&a).ok_or(EnvError::DanglingEdge {
                a: a.0,
                b: b.0,
                missing: a.0,
            })?;
            let ib = *index.get(&b).ok_or(EnvError::DanglingEdge {
                a: a.0,
                b: b.0,
                missing: b.0,
            })?;
            if ia == ib {
                return Err(EnvError::SelfLoop(a));
            }
            adjacency[ia].push(ib);
            adjacency[ib].push(ia);
        }
        for list in adjacency.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }

        let mut landmarks = landmarks;
        landmarks.sort_by_key(|l| l.id);
        for (i, lm) in landmarks.iter().enumerate() {
            if i > 0 && landmarks[i - 1].id == lm.id {
                return Err(EnvError::DuplicateLandmark(lm.id));
            }
            if index.contains_key(&NodeId(lm.id.0)) {
                return Err(EnvError::LandmarkIdCollision(lm.id));
            }
            if !lm.coord.is_finite() {
                return Err(EnvError::NonFinite(format!("landmark {}", lm.id)));
            }
            if !lm.visibility_radius_m.is_finite() || lm.visibility_radius_m <= 0.0 {
                return Err(EnvError::BadRadius {
                    landmark: lm.id,
                    radius: lm.visibility_radius_m,
                });
            }
        }

        let nodes: Vec<Node> = nodes
            .into_iter()
            .enumerate()
            .map(|(i, spec)| Node {
                id: spec.id,
                coord: spec.coord,
                streetviews: spec.streetviews,
                degree: adjacency[i].len(),
            })
            .collect();
        for n in &nodes {
            if n.streetviews.len() > n.degree {
                return Err(EnvError::TooManyStreetviews {
                    node: n.id,
                    images: n.streetviews.len(),
                    degree: n.degree,
                });
            }
        }

        Ok(EnvGraph {
            meta,
            nodes,
            index,
            adjacency,
            landmarks,
        })
    }

    pub fn meta(&self) -> &EnvMeta {
        &self.meta
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn landmark(&self, id: LandmarkId) -> Option<&Landmark> {
        self.landmarks
            .binary_search_by_key(&id, |l| l.id)
            .ok()
            .map(|i| &self.landmarks[i])
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    fn idx(&self, id: NodeId) -> Result<usize, EnvError> {
        self.index.get(&id).copied().ok_or(EnvError::UnknownNode(id))
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, EnvError> {
        Ok(&self.nodes[self.idx(id)?])
    }

    pub fn coord(&self, id: NodeId) -> Result<Coord, EnvError> {
        Ok(self.node(id)?.coord)
    }

    pub fn neighbors(&self, id: NodeId) -> Result<Vec<NodeId>, EnvError> {
        let i = self.idx(id)?;
        Ok(self.adjacency[i].iter().map(|&j| self.nodes[j].id).collect())
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        match (self.index.get(&a), self.index.get(&b)) {
            (Some(&ia), Some(&ib)) => self.adjacency[ia].binary_search(&ib).is_ok(),
            _ => false,
        }
    }

    /// Incident roads labelled by octant, ordered clockwise from north. Street
    /// views, when present, are aligned with this order.
    pub fn connections(&self, id: NodeId) -> Result<Vec<Connection>, EnvError> {
        let i = self.idx(id)?;
        let here = self.nodes[i].coord;
        let mut out: Vec<(f64, Connection)> = self.adjacency[i]
            .iter()
            .map(|&j| {
                let n = &self.nodes[j];
                let bearing = (n.coord - here).bearing_deg();
                (
                    bearing,
                    Connection {
                        dir: Octant::from_bearing(bearing),
                        node: n.id,
                        coord: n.coord,
                    },
                )
            })
            .collect();
        out.sort_by(|a, b| {
            a.1.dir
                .cmp(&b.1.dir)
                .then(a.0.total_cmp(&b.0))
                .then(a.1.node.cmp(&b.1.node))
        });
        Ok(out.into_iter().map(|(_, c)| c).collect())
    }

    /// Breadth-first hop counts from `from` to every node, indexed like [`Self::nodes`].
    pub fn bfs_distances(&self, from: NodeId) -> Result<Vec<Option<u32>>, EnvError> {
        let start = self.idx(from)?;
        let mut dist = vec![None; self.nodes.len()];
        dist[start] = Some(0);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// Edge count of a shortest path, or `None` when `b` is unreachable from `a`.
    pub fn shortest_path_len(&self, a: NodeId, b: NodeId) -> Result<Option<u32>, EnvError> {
        let target = self.idx(b)?;
        let start = self.idx(a)?;
        if start == target {
            return Ok(Some(0));
        }
        let mut dist = vec![u32::MAX; self.nodes.len()];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    if v == target {
                        return Ok(Some(dist[v]));
                    }
                    queue.push_back(v);
                }
            }
        }
        Ok(None)
    }

    /// Landmarks within their visibility radius of `node`, each with its exact
    /// position as seen from the node.
    pub fn visible_landmarks(&self, node: NodeId) -> Result<Vec<(&Landmark, RelPos)>, EnvError> {
        let here = self.coord(node)?;
        Ok(self
            .landmarks
            .iter()
            .filter_map(|lm| {
                let rel = rel_pos(here, lm.coord);
                (rel.distance_m <= lm.visibility_radius_m).then_some((lm, rel))
            })
            .collect())
    }

    pub fn sees_any_landmark(&self, node: NodeId) -> Result<bool, EnvError> {
        Ok(!self.visible_landmarks(node)?.is_empty())
    }

    /// Connected components as node-index sets, largest first.
    fn components(&self) -> Vec<Vec<usize>> {
        let mut comp = vec![usize::MAX; self.nodes.len()];
        let mut out = Vec::new();
        for s in 0..self.nodes.len() {
            if comp[s] != usize::MAX {
                continue;
            }
            let c = out.len();
            let mut members = vec![s];
            comp[s] = c;
            let mut k = 0;
            while k < members.len() {
                let u = members[k];
                k += 1;
                for &v in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = c;
                        members.push(v);
                    }
                }
            }
            out.push(members);
        }
        // stable: ties keep the component containing the smallest id first
        out.sort_by_key(|c| std::cmp::Reverse(c.len()));
        out
    }

    pub fn component_count(&self) -> usize {
        self.components().len()
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Restriction to the largest connected component.
    pub fn largest_component(&self) -> EnvGraph {
        let comps = self.components();
        if comps.len() <= 1 {
            return self.clone();
        }
        let mut keep = comps[0].clone();
        keep.sort_unstable();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let nodes: Vec<Node> = keep.iter().map(|&i| self.nodes[i].clone()).collect();
        let adjacency: Vec<Vec<usize>> = keep
            .iter()
            .map(|&i| self.adjacency[i].iter().map(|&j| remap[j]).collect())
            .collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        EnvGraph {
            meta: self.meta.clone(),
            nodes,
            index,
            adjacency,
            landmarks: self.landmarks.clone(),
        }
    }

    /// Same graph with every landmark radius replaced by `f(landmark)`.
    pub fn with_radii(&self, f: impl Fn(&Landmark) -> f64) -> Result<EnvGraph, EnvError> {
        let mut out = self.clone();
        for lm in out.landmarks.iter_mut() {
            let r = f(lm);
            if !r.is_finite() || r <= 0.0 {
                return Err(EnvError::BadRadius {
                    landmark: lm.id,
                    radius: r,
                });
            }
            lm.visibility_radius_m = r;
        }
        Ok(out)
    }

    /// Undirected edges, each once with the smaller id first, in ascending order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, list) in self.adjacency.iter().enumerate() {
            for &j in list {
                if i < j {
                    out.push((self.nodes[i].id, self.nodes[j].id));
                }
            }
        }
        out
    }
}
