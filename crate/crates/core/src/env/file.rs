use serde::{Deserialize, Serialize};

use super::{EnvError, EnvGraph, EnvMeta, Landmark, LandmarkId, NodeId, NodeSpec};
use crate::geom::Coord;

/// On-disk environment layout. Edges are listed once per undirected pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvFile {
    pub meta: EnvMeta,
    pub nodes: Vec<FileNode>,
    pub edges: Vec<FileEdge>,
    #[serde(default)]
    pub landmarks: Vec<FileLandmark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileNode {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub streetviews: Vec<String>,
}

pub type FileEdge = [u64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileLandmark {
    pub id: u64,
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub visibility_radius_m: f64,
}

/// Parses and validates an environment file. A disconnected graph is reduced to
/// its largest component with a warning.
pub fn load_env(bytes: &[u8]) -> Result<EnvGraph, EnvError> {
    let file: EnvFile = serde_json::from_slice(bytes)?;
    let env = EnvGraph::try_from(file)?;
    let comps = env.component_count();
    if comps > 1 {
        let kept = env.largest_component();
        log::warn!(
            "environment '{}' has {} components; keeping the largest ({} of {} nodes)",
            env.meta().name,
            comps,
            kept.node_count(),
            env.node_count()
        );
        return Ok(kept);
    }
    Ok(env)
}

impl TryFrom<EnvFile> for EnvGraph {
    type Error = EnvError;

    fn try_from(file: EnvFile) -> Result<Self, EnvError> {
        let nodes = file
            .nodes
            .into_iter()
            .map(|n| NodeSpec {
                id: NodeId(n.id),
                coord: Coord::new(n.x, n.y),
                streetviews: n.streetviews,
            })
            .collect();
        let edges: Vec<(NodeId, NodeId)> =
            file.edges.iter().map(|&[a, b]| (NodeId(a), NodeId(b))).collect();
        let landmarks = file
            .landmarks
            .into_iter()
            .map(|l| Landmark {
                id: LandmarkId(l.id),
                name: l.name,
                coord: Coord::new(l.x, l.y),
                visibility_radius_m: l.visibility_radius_m,
            })
            .collect();
        EnvGraph::from_edges(file.meta, nodes, &edges, landmarks)
    }
}

impl EnvGraph {
    pub fn to_file(&self) -> EnvFile {
        EnvFile {
            meta: self.meta().clone(),
            nodes: self
                .nodes()
                .iter()
                .map(|n| FileNode {
                    id: n.id.0,
                    x: n.coord.x,
                    y: n.coord.y,
                    streetviews: n.streetviews.clone(),
                })
                .collect(),
            edges: self.edges().into_iter().map(|(a, b)| [a.0, b.0]).collect(),
            landmarks: self
                .landmarks()
                .iter()
                .map(|l| FileLandmark {
                    id: l.id.0,
                    name: l.name.clone(),
                    x: l.coord.x,
                    y: l.coord.y,
                    visibility_radius_m: l.visibility_radius_m,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("environment serializes")
    }
}
