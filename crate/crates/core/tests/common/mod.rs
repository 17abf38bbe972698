#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urbannav::env::{gen_synthetic, EnvGraph, EnvMeta, NodeId, NodeSpec, SynthKind, SynthSpec};
use urbannav::geom::Coord;

pub fn grid(width: u32, height: u32, blocked: f64, landmarks: u32, visible: f64, seed: u64) -> EnvGraph {
    gen_synthetic(&SynthSpec {
        kind: SynthKind::Grid,
        width,
        height,
        blocked_fraction: blocked,
        landmark_count: landmarks,
        target_visible_fraction: visible,
        seed,
    })
    .expect("synthetic grid")
}

/// Random graph on `n` nodes: a random spanning tree plus `extra` chords.
/// Chords may repeat; the graph dedups them.
pub fn random_graph(n: usize, extra: usize, seed: u64) -> EnvGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<NodeSpec> = (0..n as u64)
        .map(|i| NodeSpec {
            id: NodeId(i),
            coord: Coord::new(rng.random_range(-50..50) as f64, rng.random_range(-50..50) as f64),
            streetviews: vec![],
        })
        .collect();
    let mut edges = Vec::new();
    for i in 1..n as u64 {
        edges.push((NodeId(i), NodeId(rng.random_range(0..i))));
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n as u64);
        let b = rng.random_range(0..n as u64);
        if a != b {
            edges.push((NodeId(a), NodeId(b)));
        }
    }
    EnvGraph::from_edges(EnvMeta::named("random"), nodes, &edges, vec![]).expect("random graph")
}

/// All-pairs hop counts by Floyd-Warshall over the raw edge list.
pub fn floyd_warshall(env: &EnvGraph) -> Vec<Vec<Option<u32>>> {
    let ids: Vec<NodeId> = env.nodes().iter().map(|n| n.id).collect();
    let pos = |id: NodeId| ids.iter().position(|&x| x == id).unwrap();
    let n = ids.len();
    const INF: u32 = u32::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for (a, b) in env.edges() {
        d[pos(a)][pos(b)] = 1;
        d[pos(b)][pos(a)] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d.into_iter()
        .map(|row| row.into_iter().map(|v| (v < INF).then_some(v)).collect())
        .collect()
}
