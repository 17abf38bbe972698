//! Seeded synthetic cities used as desk-scale stand-ins for real road networks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvError, EnvGraph, EnvMeta, Landmark, LandmarkId, NodeId, NodeSpec};
use crate::geom::{rel_pos, Coord};

/// Allowed slack between the requested and achieved visible fraction.
pub const VISIBILITY_TOLERANCE: f64 = 0.05;

const RING_SPACING: i64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// 4-connected street grid.
    Grid,
    /// Eight avenues radiating from the center crossed by square ring roads.
    Radial,
}

impl std::str::FromStr for SynthKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "grid" => Ok(SynthKind::Grid),
            "radial" => Ok(SynthKind::Radial),
            other => Err(format!("unknown generator kind '{other}' (grid|radial)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub width: u32,
    pub height: u32,
    pub blocked_fraction: f64,
    pub landmark_count: u32,
    pub target_visible_fraction: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn grid(width: u32, height: u32) -> Self {
        SynthSpec {
            kind: SynthKind::Grid,
            width,
            height,
            blocked_fraction: 0.0,
            landmark_count: 1,
            target_visible_fraction: 1.0,
            seed: 0,
        }
    }
}

/// Fraction of nodes that see at least one landmark.
pub fn visible_fraction(env: &EnvGraph) -> f64 {
    let seen = env
        .nodes()
        .iter()
        .filter(|n| env.sees_any_landmark(n.id).unwrap_or(false))
        .count();
    seen as f64 / env.node_count() as f64
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<EnvGraph, EnvError> {
    if spec.width < 2 || spec.height < 2 {
        return Err(EnvError::InvalidSpec("width and height must be at least 2".into()));
    }
    if !(0.0..0.5).contains(&spec.blocked_fraction) {
        return Err(EnvError::InvalidSpec("blocked_fraction must be in [0, 0.5)".into()));
    }
    if !(0.0..=1.0).contains(&spec.target_visible_fraction) {
        return Err(EnvError::InvalidSpec("target_visible_fraction must be in [0, 1]".into()));
    }
    if spec.landmark_count == 0 && spec.target_visible_fraction > 0.0 {
        return Err(EnvError::InfeasibleVisibility {
            target: spec.target_visible_fraction,
            reason: "no landmarks to see".into(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let w = spec.width as i64;
    let h = spec.height as i64;
    let (cells, edges) = match spec.kind {
        SynthKind::Grid => grid_layout(w, h),
        SynthKind::Radial => radial_layout(w, h),
    };

    let n_blocked = (spec.blocked_fraction * cells.len() as f64).round() as usize;
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.shuffle(&mut rng);
    let blocked: BTreeSet<u64> = order[..n_blocked].iter().map(|&i| cells[i].0).collect();

    let nodes: Vec<NodeSpec> = cells
        .iter()
        .filter(|(id, _)| !blocked.contains(id))
        .map(|&(id, c)| NodeSpec {
            id: NodeId(id),
            coord: c,
            streetviews: vec![],
        })
        .collect();
    let edges: Vec<(NodeId, NodeId)> = edges
        .into_iter()
        .filter(|(a, b)| !blocked.contains(a) && !blocked.contains(b))
        .map(|(a, b)| (NodeId(a), NodeId(b)))
        .collect();

    let kind = match spec.kind {
        SynthKind::Grid => "grid",
        SynthKind::Radial => "radial",
    };
    let meta = EnvMeta::named(format!("{kind}-{}x{}-s{}", spec.width, spec.height, spec.seed));
    let graph = EnvGraph::from_edges(meta.clone(), nodes, &edges, vec![])?.largest_component();

    let landmarks = place_landmarks(&graph, spec.landmark_count as usize, w * h, &mut rng);
    let radius = solve_radius(&graph, &landmarks, spec.target_visible_fraction)?;
    let landmarks = landmarks
        .into_iter()
        .enumerate()
        .map(|(i, (id, coord))| Landmark {
            id,
            name: landmark_name(i),
            coord,
            visibility_radius_m: radius,
        })
        .collect();

    let nodes = graph
        .nodes()
        .iter()
        .map(|n| NodeSpec {
            id: n.id,
            coord: n.coord,
            streetviews: (0..n.degree).map(|k| format!("sv/{}_{}.jpg", n.id, k)).collect(),
        })
        .collect();
    EnvGraph::from_edges(meta, nodes, &graph.edges(), landmarks)
}

fn landmark_name(i: usize) -> String {
    let letter = (b'A' + (i % 26) as u8) as char;
    if i < 26 {
        format!("Skyscraper {letter}")
    } else {
        format!("Skyscraper {letter}{}", i / 26)
    }
}

type Layout = (Vec<(u64, Coord)>, Vec<(u64, u64)>);

fn cell_id(w: i64, x: i64, y: i64) -> u64 {
    (y * w + x) as u64
}

fn grid_layout(w: i64, h: i64) -> Layout {
    let mut cells = Vec::with_capacity((w * h) as usize);
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            cells.push((cell_id(w, x, y), Coord::new(x as f64, y as f64)));
            if x + 1 < w {
                edges.push((cell_id(w, x, y), cell_id(w, x + 1, y)));
            }
            if y + 1 < h {
                edges.push((cell_id(w, x, y), cell_id(w, x, y + 1)));
            }
        }
    }
    (cells, edges)
}

fn radial_layout(w: i64, h: i64) -> Layout {
    let (cx, cy) = (w / 2, h / 2);
    let inside = |x: i64, y: i64| (0..w).contains(&x) && (0..h).contains(&y);
    let mut points = BTreeSet::new();
    let mut edges = BTreeSet::new();
    points.insert((cx, cy));

    for dir in crate::geom::Octant::ALL {
        let (dx, dy) = dir.grid_step();
        let mut k = 1;
        while inside(cx + k * dx, cy + k * dy) {
            let (px, py) = (cx + (k - 1) * dx, cy + (k - 1) * dy);
            let (qx, qy) = (cx + k * dx, cy + k * dy);
            points.insert((qx, qy));
            edges.insert(ordered(cell_id(w, px, py), cell_id(w, qx, qy)));
            k += 1;
        }
    }

    let max_r = w.max(h);
    let mut r = RING_SPACING;
    while r <= max_r {
        for y in (cy - r)..=(cy + r) {
            for x in (cx - r)..=(cx + r) {
                if !inside(x, y) || (x - cx).abs().max((y - cy).abs()) != r {
                    continue;
                }
                points.insert((x, y));
                for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                    if inside(nx, ny) && (nx - cx).abs().max((ny - cy).abs()) == r {
                        edges.insert(ordered(cell_id(w, x, y), cell_id(w, nx, ny)));
                    }
                }
            }
        }
        r += RING_SPACING;
    }

    let cells = points
        .into_iter()
        .map(|(x, y)| (cell_id(w, x, y), Coord::new(x as f64, y as f64)))
        .collect();
    (cells, edges.into_iter().collect())
}

fn ordered(a: u64, b: u64) -> (u64, u64) {
    (a.min(b), a.max(b))
}

/// Farthest-point placement on node coordinates, seeded from the node nearest
/// the bounding-box center.
fn place_landmarks(
    graph: &EnvGraph,
    count: usize,
    first_id: i64,
    rng: &mut ChaCha8Rng,
) -> Vec<(LandmarkId, Coord)> {
    let nodes = graph.nodes();
    if count == 0 || nodes.is_empty() {
        return Vec::new();
    }
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for n in nodes {
        min_x = min_x.min(n.coord.x);
        max_x = max_x.max(n.coord.x);
        min_y = min_y.min(n.coord.y);
        max_y = max_y.max(n.coord.y);
    }
    let center = Coord::new((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
    let first = nodes
        .iter()
        .min_by(|a, b| a.coord.distance(center).total_cmp(&b.coord.distance(center)))
        .map(|n| n.coord)
        .expect("non-empty");

    let max_id = nodes.iter().map(|n| n.id.0).max().unwrap_or(0).max(first_id as u64);
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = nodes.iter().map(|n| n.coord.distance(first)).collect();
    while chosen.len() < count.min(nodes.len()) {
        let best = nearest.iter().cloned().fold(f64::MIN, f64::max);
        let ties: Vec<usize> = (0..nodes.len()).filter(|&i| nearest[i] == best).collect();
        let pick = ties[rng.random_range(0..ties.len())];
        let c = nodes[pick].coord;
        chosen.push(c);
        for (i, n) in nodes.iter().enumerate() {
            nearest[i] = nearest[i].min(n.coord.distance(c));
        }
    }
    chosen
        .into_iter()
        .enumerate()
        .map(|(i, c)| (LandmarkId(max_id + 1 + i as u64), c))
        .collect()
}

/// Common radius whose visible fraction is closest to `target`.
fn solve_radius(
    graph: &EnvGraph,
    landmarks: &[(LandmarkId, Coord)],
    target: f64,
) -> Result<f64, EnvError> {
    if landmarks.is_empty() {
        return Ok(1.0);
    }
    let mut dmin: Vec<f64> = graph
        .nodes()
        .iter()
        .map(|n| {
            landmarks
                .iter()
                .map(|&(_, c)| rel_pos(n.coord, c).distance_m)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    dmin.sort_by(f64::total_cmp);
    let n = dmin.len() as f64;
    let smallest_positive = dmin.iter().copied().find(|&d| d > 0.0);

    let mut candidates: Vec<f64> = Vec::new();
    if let Some(p) = smallest_positive {
        candidates.push(p / 2.0);
    } else {
        candidates.push(1.0);
    }
    let mut prev = f64::NAN;
    for &d in &dmin {
        if d > 0.0 && d != prev {
            candidates.push(d);
        }
        prev = d;
    }

    let frac = |r: f64| dmin.partition_point(|&d| d <= r) as f64 / n;
    let (best_r, best_f) = candidates
        .iter()
        .map(|&r| (r, frac(r)))
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .expect("at least one candidate");
    if (best_f - target).abs() > VISIBILITY_TOLERANCE + 1e-12 {
        return Err(EnvError::InfeasibleVisibility {
            target,
            reason: format!("closest achievable fraction is {best_f:.3}"),
        });
    }
    Ok(best_r)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive scan independent of `visible_landmarks`.
    fn scan_fraction(env: &EnvGraph) -> f64 {
        let mut seen = 0;
        for n in env.nodes() {
            let (nx, ny) = n.coord.to_meters();
            if env.landmarks().iter().any(|l| {
                let (lx, ly) = l.coord.to_meters();
                ((lx - nx).powi(2) + (ly - ny).powi(2)).sqrt() <= l.visibility_radius_m + 1e-9
            }) {
                seen += 1;
            }
        }
        seen as f64 / env.node_count() as f64
    }

    #[test]
    fn small_grid_fully_visible() {
        let mut spec = SynthSpec::grid(3, 3);
        spec.target_visible_fraction = 1.0;
        let g = gen_synthetic(&spec).unwrap();
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.landmarks()[0].coord, Coord::new(1.0, 1.0));
        for n in g.nodes() {
            assert_eq!(g.visible_landmarks(n.id).unwrap().len(), 1);
        }
    }

    #[test]
    fn blocked_grid_hits_target_fraction() {
        let spec = SynthSpec {
            kind: SynthKind::Grid,
            width: 40,
            height: 40,
            blocked_fraction: 0.2,
            landmark_count: 6,
            target_visible_fraction: 0.4,
            seed: 7,
        };
        let g = gen_synthetic(&spec).unwrap();
        assert!(g.is_connected());
        let f = scan_fraction(&g);
        assert!((0.35..=0.45).contains(&f), "fraction {f}");
        assert!((visible_fraction(&g) - f).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SynthSpec {
            kind: SynthKind::Grid,
            width: 40,
            height: 40,
            blocked_fraction: 0.2,
            landmark_count: 6,
            target_visible_fraction: 0.4,
            seed: 7,
        };
        assert_eq!(gen_synthetic(&spec).unwrap().to_json(), gen_synthetic(&spec).unwrap().to_json());
    }

    #[test]
    fn radial_city_connected_with_diagonals() {
        let spec = SynthSpec {
            kind: SynthKind::Radial,
            width: 31,
            height: 31,
            blocked_fraction: 0.1,
            landmark_count: 4,
            target_visible_fraction: 0.5,
            seed: 3,
        };
        let g = gen_synthetic(&spec).unwrap();
        assert!(g.is_connected());
        let diag = g
            .nodes()
            .iter()
            .flat_map(|n| g.connections(n.id).unwrap())
            .any(|c| !c.dir.is_cardinal());
        assert!(diag);
        assert!((scan_fraction(&g) - 0.5).abs() <= VISIBILITY_TOLERANCE);
    }

    #[test]
    fn zero_landmarks_with_positive_target_is_infeasible() {
        let mut spec = SynthSpec::grid(5, 5);
        spec.landmark_count = 0;
        assert!(matches!(gen_synthetic(&spec), Err(EnvError::InfeasibleVisibility { .. })));
    }

    #[test]
    fn rejects_bad_dimensions() {
        let mut spec = SynthSpec::grid(1, 5);
        assert!(gen_synthetic(&spec).is_err());
        spec.width = 5;
        spec.blocked_fraction = 0.5;
        assert!(gen_synthetic(&spec).is_err());
    }
}
