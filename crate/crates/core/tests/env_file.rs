use serde_json::json;
use urbannav::env::{load_env, EnvError, EnvFile, FileLandmark, FileNode};

/// City-sized file in the dataset layout: a 42 x 27 street grid (1134 nodes)
/// with ten landmarks placed off the road network.
fn city_file() -> EnvFile {
    let (w, h) = (42u64, 27u64);
    let id = |x: u64, y: u64| 1 + y * w + x;
    let nodes = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| FileNode {
            id: id(x, y),
            x: x as f64,
            y: y as f64,
            streetviews: if x == 0 && y == 0 {
                vec!["sv/1_0.jpg".into(), "sv/1_90.jpg".into()]
            } else {
                vec![]
            },
        })
        .collect();
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                edges.push([id(x, y), id(x + 1, y)]);
            }
            if y + 1 < h {
                edges.push([id(x, y), id(x, y + 1)]);
            }
        }
    }
    let landmarks = (0..10u64)
        .map(|k| FileLandmark {
            id: 100_000 + k,
            name: format!("Landmark_{k}"),
            x: 2.5 + 4.0 * k as f64,
            y: 1.5 + 2.5 * k as f64,
            visibility_radius_m: 600.0,
        })
        .collect();
    EnvFile {
        meta: serde_json::from_value(json!({"name": "city", "city": "Beijing"})).unwrap(),
        nodes,
        edges,
        landmarks,
    }
}

#[test]
fn city_scale_file_loads() {
    let bytes = serde_json::to_vec(&city_file()).unwrap();
    let env = load_env(&bytes).unwrap();
    assert_eq!(env.node_count(), 1134);
    assert_eq!(env.landmarks().len(), 10);
    assert_eq!(env.meta().step_m, 50.0);
    assert_eq!(env.meta().city.as_deref(), Some("Beijing"));
    assert!(env.is_connected());
    // re-serialization is stable
    let again = load_env(env.to_json().as_bytes()).unwrap();
    assert_eq!(again.to_json(), env.to_json());
}

#[test]
fn disconnected_file_keeps_largest_component() {
    let mut f = city_file();
    let stray = 9_000;
    f.nodes.push(FileNode { id: stray, x: 500.0, y: 500.0, streetviews: vec![] });
    f.nodes.push(FileNode { id: stray + 1, x: 501.0, y: 500.0, streetviews: vec![] });
    f.edges.push([stray, stray + 1]);
    let env = load_env(&serde_json::to_vec(&f).unwrap()).unwrap();
    assert_eq!(env.node_count(), 1134);
}

#[test]
fn malformed_files_are_rejected() {
    let base = city_file();

    let mut f = base.clone();
    f.edges.push([1, 999_999]);
    assert!(matches!(load_env(&serde_json::to_vec(&f).unwrap()), Err(EnvError::DanglingEdge { .. })));

    let mut f = base.clone();
    f.landmarks[0].id = 5;
    assert!(matches!(load_env(&serde_json::to_vec(&f).unwrap()), Err(EnvError::LandmarkIdCollision(_))));

    let mut f = base.clone();
    f.landmarks[0].visibility_radius_m = 0.0;
    assert!(matches!(load_env(&serde_json::to_vec(&f).unwrap()), Err(EnvError::BadRadius { .. })));

    let mut f = base.clone();
    f.nodes[0].streetviews = vec!["a".into(), "b".into(), "c".into()];
    assert!(matches!(load_env(&serde_json::to_vec(&f).unwrap()), Err(EnvError::TooManyStreetviews { .. })));

    let mut f = base.clone();
    f.meta.step_m = 25.0;
    assert!(matches!(load_env(&serde_json::to_vec(&f).unwrap()), Err(EnvError::BadStepSize(_))));

    let mut f = base;
    f.nodes.push(f.nodes[3].clone());
    assert!(matches!(load_env(&serde_json::to_vec(&f).unwrap()), Err(EnvError::DuplicateNode(_))));
}
