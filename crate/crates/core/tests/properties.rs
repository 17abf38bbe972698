mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use urbannav::env::{LandmarkId, NodeId};
use urbannav::eval::{spl, BatchReport};
use urbannav::geom::{angular_deviation, rel_pos, Coord, Octant, RelPos};
use urbannav::lm::{parse_decision, render_decision, ParsedDecision};
use urbannav::memory::{parse_record_sentence, DirOption, EpisodicRecord, Memory};
use urbannav::perception::{perceive, PerceptionProfile};
use urbannav::planner::{
    plan_step, select_action, synthesize_plan, Belief, ConnectionView, Plan, PlanningInput, SubGoal,
    Until, UntilContext,
};
use urbannav::agents::EpisodeResult;
use urbannav::spatial::{
    anticipate_goal, classify_direction, fuse_estimates, largest_cluster, triangulate_goal,
    EstimateSource, GoalEstimate,
};
use urbannav::taskgen::{approx_meters, budget_for, sample_tasks};

fn octant() -> impl Strategy<Value = Octant> {
    (0usize..8).prop_map(Octant::from_index)
}

fn est(x: f64, y: f64, step: u32) -> GoalEstimate {
    GoalEstimate::new(Coord::new(x, y), EstimateSource::Perceived, step)
}

// ---- geometry ----

proptest! {
    #[test]
    fn rel_pos_is_antisymmetric(ax in -500i32..500, ay in -500i32..500, bx in -500i32..500, by in -500i32..500) {
        prop_assume!((ax, ay) != (bx, by));
        let a = Coord::new(ax as f64, ay as f64);
        let b = Coord::new(bx as f64, by as f64);
        let ab = rel_pos(a, b);
        let ba = rel_pos(b, a);
        prop_assert!((ab.distance_m - ba.distance_m).abs() < 1e-9);
        prop_assert!(angular_deviation(ab.bearing_deg, ba.bearing_deg + 180.0) < 1e-9);
        prop_assert!((0.0..360.0).contains(&ab.bearing_deg));
    }

    #[test]
    fn meters_are_fifty_per_step(x in -1e4f64..1e4, y in -1e4f64..1e4) {
        let (mx, my) = Coord::new(x, y).to_meters();
        prop_assert_eq!(mx, x * 50.0);
        prop_assert_eq!(my, y * 50.0);
    }
}

// ---- environment ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjacency_is_symmetric(seed in 0u64..1000, blocked in 0.0f64..0.3) {
        let env = common::grid(20, 20, blocked, 5, 0.4, seed);
        for n in env.nodes() {
            let nb = env.neighbors(n.id).unwrap();
            prop_assert_eq!(nb.len(), n.degree);
            for m in nb {
                prop_assert!(m != n.id);
                prop_assert!(env.neighbors(m).unwrap().contains(&n.id));
            }
        }
    }

    #[test]
    fn hop_distance_is_a_metric(seed in 0u64..1000, n in 5usize..60, extra in 0usize..40) {
        let env = common::random_graph(n, extra, seed);
        let ids: Vec<NodeId> = env.nodes().iter().map(|x| x.id).collect();
        let d: Vec<Vec<Option<u32>>> = ids.iter().map(|&a| env.bfs_distances(a).unwrap()).collect();
        for i in 0..ids.len() {
            prop_assert_eq!(d[i][i], Some(0));
            for j in 0..ids.len() {
                prop_assert_eq!(d[i][j], d[j][i]);
                prop_assert_eq!(env.shortest_path_len(ids[i], ids[j]).unwrap(), d[i][j]);
                for k in 0..ids.len() {
                    let (ij, ik, kj) = (d[i][j].unwrap(), d[i][k].unwrap(), d[k][j].unwrap());
                    prop_assert!(ij <= ik + kj);
                }
            }
        }
    }

    #[test]
    fn visibility_grows_with_radius(seed in 0u64..1000, factor in 1.0f64..3.0) {
        let env = common::grid(20, 20, 0.1, 5, 0.3, seed);
        let wider = env.with_radii(|l| l.visibility_radius_m * factor).unwrap();
        for n in env.nodes() {
            let before: BTreeSet<LandmarkId> = env.visible_landmarks(n.id).unwrap().iter().map(|(l, _)| l.id).collect();
            let after: BTreeSet<LandmarkId> = wider.visible_landmarks(n.id).unwrap().iter().map(|(l, _)| l.id).collect();
            prop_assert!(before.is_subset(&after));
        }
    }
}

// ---- spatial ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn triangulation_is_vector_sum(b1 in 0.0f64..360.0, d1 in 0.0f64..3000.0, b2 in 0.0f64..360.0, d2 in 0.0f64..3000.0) {
        let out = triangulate_goal(RelPos::new(b1, d1), RelPos::new(b2, d2));
        let (e, n) = (
            d1 * b1.to_radians().sin() + d2 * b2.to_radians().sin(),
            d1 * b1.to_radians().cos() + d2 * b2.to_radians().cos(),
        );
        let (oe, on) = out.to_vector_m();
        prop_assert!((oe - e).abs() <= 1e-6 * (1.0 + d1 + d2));
        prop_assert!((on - n).abs() <= 1e-6 * (1.0 + d1 + d2));
    }

    #[test]
    fn fusion_ignores_order_of_a_clear_majority(
        cx in -100i32..100, cy in -100i32..100,
        inliers in proptest::collection::vec((-3i32..=3, -3i32..=3), 3..7),
        n_out in 0usize..3,
        perm_seed in any::<u64>(),
    ) {
        // inliers within 3·√2 of a center, pairwise within τ; outliers far
        // from the center and from each other
        let mut hist: Vec<GoalEstimate> = inliers
            .iter()
            .enumerate()
            .map(|(i, (dx, dy))| est((cx + dx) as f64, (cy + dy) as f64, i as u32))
            .collect();
        for k in 0..n_out {
            let off = 40.0 * (k as f64 + 1.0);
            hist.push(est(cx as f64 + off, cy as f64 - off, 100 + k as u32));
        }
        let want = fuse_estimates(&hist, 10.0);
        let mut shuffled = hist.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        prop_assert_eq!(fuse_estimates(&shuffled, 10.0), want);
    }

    #[test]
    fn fused_point_lies_in_cluster_box(pts in proptest::collection::vec((-60i32..60, -60i32..60), 1..9)) {
        let hist: Vec<GoalEstimate> = pts.iter().enumerate().map(|(i, &(x, y))| est(x as f64, y as f64, i as u32)).collect();
        let fused = fuse_estimates(&hist, 10.0).unwrap();
        let members = largest_cluster(&hist, 10.0).unwrap();
        let xs: Vec<f64> = members.iter().map(|&i| hist[i].coord.x).collect();
        let ys: Vec<f64> = members.iter().map(|&i| hist[i].coord.y).collect();
        let lo = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(fused.x >= lo(&xs) && fused.x <= hi(&xs));
        prop_assert!(fused.y >= lo(&ys) && fused.y <= hi(&ys));
        for &i in &members {
            for &j in &members {
                prop_assert!(hist[i].coord.distance(hist[j].coord) <= 10.0);
            }
        }
    }

    #[test]
    fn rotating_by_an_octant_advances_the_label(k in 0usize..8, r in 1.0f64..100.0) {
        let at = |i: usize| {
            let b = (45.0 * i as f64).to_radians();
            Coord::new(r * b.sin(), r * b.cos())
        };
        let a = classify_direction(at(k));
        let b = classify_direction(at(k + 1));
        prop_assert_eq!(b.octant, a.octant.rotate(1));
        prop_assert_eq!(a.qualifier, None);
    }

    #[test]
    fn anticipation_holds_goal_fixed(gx in -50i32..50, gy in -50i32..50, walk in proptest::collection::vec((-40i32..40, -40i32..40), 1..10)) {
        let goal = est(gx as f64, gy as f64, 0);
        let mut held = goal;
        for (t, (px, py)) in walk.iter().enumerate() {
            let pos = Coord::new(*px as f64, *py as f64);
            let a = anticipate_goal(Some(&held), pos, t as u32 + 1).unwrap();
            prop_assert_eq!(a.estimate.coord, goal.coord);
            prop_assert_eq!(a.delta, goal.coord - pos);
            held = a.estimate;
        }
    }
}

// ---- perception ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn oracle_sees_exactly_the_visible_set(seed in 0u64..500) {
        let env = common::grid(20, 20, 0.1, 5, 0.4, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for n in env.nodes() {
            let got = perceive(&env, n.id, &PerceptionProfile::ORACLE, &mut rng).unwrap();
            let want = env.visible_landmarks(n.id).unwrap();
            prop_assert_eq!(got.len(), want.len());
            for (d, (lm, rel)) in got.iter().zip(want.iter()) {
                prop_assert_eq!(d.landmark, lm.id);
                prop_assert_eq!(d.rel, *rel);
                prop_assert!(d.true_positive);
            }
        }
    }

    #[test]
    fn more_recall_never_loses_a_true_detection(seed in 0u64..500, lo in 0.0f64..1.0, gap in 0.0f64..1.0) {
        let env = common::grid(20, 20, 0.1, 5, 0.5, seed);
        let hi = (lo + gap).min(1.0);
        let p = |recall| PerceptionProfile { recall, false_positive_rate: 0.1, distance_noise_sigma: 0.2, bearing_quantization_deg: 45.0 };
        for n in env.nodes() {
            let a = perceive(&env, n.id, &p(lo), &mut ChaCha8Rng::seed_from_u64(seed ^ n.id.0)).unwrap();
            let b = perceive(&env, n.id, &p(hi), &mut ChaCha8Rng::seed_from_u64(seed ^ n.id.0)).unwrap();
            let tp = |v: &[urbannav::perception::Detection]| v.iter().filter(|d| d.true_positive).map(|d| d.landmark).collect::<BTreeSet<_>>();
            prop_assert!(tp(&a).is_subset(&tp(&b)));
        }
    }

    #[test]
    fn bearings_follow_quantization(seed in 0u64..500, q in prop_oneof![Just(15.0f64), Just(30.0), Just(45.0), Just(90.0)]) {
        let env = common::grid(20, 20, 0.1, 5, 0.5, seed);
        let p = PerceptionProfile { recall: 0.9, false_positive_rate: 0.3, distance_noise_sigma: 0.2, bearing_quantization_deg: q };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for n in env.nodes() {
            for d in perceive(&env, n.id, &p, &mut rng).unwrap() {
                let k = d.rel.bearing_deg / q;
                prop_assert!((k - k.round()).abs() < 1e-9, "bearing {} not a multiple of {}", d.rel.bearing_deg, q);
                prop_assert!((0.0..360.0).contains(&d.rel.bearing_deg));
                prop_assert!(d.rel.distance_m >= 0.0);
            }
        }
    }
}

#[test]
fn distance_noise_has_unit_median_ratio() {
    let env = common::grid(6, 6, 0.0, 1, 1.0, 3);
    let node = env
        .nodes()
        .iter()
        .find(|n| {
            env.visible_landmarks(n.id)
                .unwrap()
                .first()
                .is_some_and(|(_, r)| r.distance_m > 0.0)
        })
        .expect("a node off the landmark")
        .id;
    let truth = env.visible_landmarks(node).unwrap()[0].1.distance_m;
    let p = PerceptionProfile {
        recall: 1.0,
        false_positive_rate: 0.0,
        distance_noise_sigma: 0.2,
        bearing_quantization_deg: 45.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut ratios: Vec<f64> = (0..10_000)
        .map(|_| perceive(&env, node, &p, &mut rng).unwrap()[0].rel.distance_m / truth)
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = ratios[ratios.len() / 2];
    assert!((median - 1.0).abs() <= 0.03, "median ratio {median}");
}

// ---- memory ----

fn record_strategy() -> impl Strategy<Value = EpisodicRecord> {
    (
        -99i32..99,
        -99i32..99,
        proptest::collection::btree_set(0usize..8, 1..5),
        any::<prop::sample::Index>(),
    )
        .prop_map(|(x, y, dirs, pick)| {
            let options: Vec<DirOption> = dirs
                .iter()
                .map(|&i| DirOption { dir: Octant::from_index(i), visited: i % 2 == 0 })
                .collect();
            let action = options[pick.index(options.len())].dir;
            let (dx, dy) = action.grid_step();
            EpisodicRecord {
                step: 0,
                node: NodeId(0),
                coord: Coord::new(x as f64, y as f64),
                options,
                action,
                arrived_node: NodeId(1),
                arrived: Coord::new((x as i64 + dx) as f64, (y as i64 + dy) as f64),
                estimate: None,
            }
        })
}

proptest! {
    #[test]
    fn record_sentence_round_trips(rec in record_strategy()) {
        let p = parse_record_sentence(&rec.sentence()).expect("parses");
        prop_assert_eq!(p.coord, rec.coord);
        prop_assert_eq!(p.arrived, rec.arrived);
        prop_assert_eq!(p.action, rec.action);
        prop_assert_eq!(p.options, rec.options.iter().map(|o| o.dir).collect::<Vec<_>>());
    }

    #[test]
    fn visited_set_is_nodes_and_arrivals(walk in proptest::collection::vec((0u64..30, 0u64..30), 1..40)) {
        let mut mem = Memory::new(10, 10.0);
        let mut want = BTreeSet::new();
        for (t, &(a, b)) in walk.iter().enumerate() {
            mem.record_step(EpisodicRecord {
                step: t as u32,
                node: NodeId(a),
                coord: Coord::ORIGIN,
                options: vec![DirOption { dir: Octant::N, visited: false }],
                action: Octant::N,
                arrived_node: NodeId(b),
                arrived: Coord::new(0.0, 1.0),
                estimate: None,
            }).unwrap();
            want.insert(NodeId(a));
            want.insert(NodeId(b));
            prop_assert_eq!(mem.visited(), &want);
        }
    }
}

// ---- planner ----

fn conns_strategy() -> impl Strategy<Value = Vec<ConnectionView>> {
    proptest::collection::btree_map(0usize..8, 0u32..3, 1..6).prop_map(|m| {
        m.into_iter()
            .map(|(i, visits)| {
                let dir = Octant::from_index(i);
                let (dx, dy) = dir.grid_step();
                ConnectionView {
                    dir,
                    node: NodeId(100 + i as u64),
                    coord: Coord::new(dx as f64, dy as f64),
                    visits,
                }
            })
            .collect()
    })
}

fn subgoal() -> impl Strategy<Value = SubGoal> {
    (
        octant(),
        prop_oneof![
            Just(Until::Intersection),
            Just(Until::Blocked),
            Just(Until::Arrival),
            (1u32..20).prop_map(Until::Steps)
        ],
    )
        .prop_map(|(d, u)| SubGoal::new(d, u))
}

proptest! {
    #[test]
    fn selected_action_is_a_real_road(
        conns in conns_strategy(),
        sgs in proptest::collection::vec(subgoal(), 1..4),
        prev in proptest::option::of(0usize..8),
    ) {
        let previous = prev.map(|i| NodeId(100 + i as u64));
        let a = select_action(&Plan::new(sgs, 0), &conns, previous);
        prop_assert!(conns.iter().any(|c| c.dir == a.direction && c.node == a.target));
    }

    #[test]
    fn no_reversal_while_the_plan_road_is_open(
        conns in conns_strategy(),
        dir_pick in any::<prop::sample::Index>(),
        prev_pick in any::<prop::sample::Index>(),
    ) {
        prop_assume!(conns.len() >= 2);
        let mut conns = conns;
        let i = dir_pick.index(conns.len());
        conns[i].visits = 0;
        let j = prev_pick.index(conns.len());
        prop_assume!(i != j);
        let previous = Some(conns[j].node);
        let plan = Plan::new(vec![SubGoal::new(conns[i].dir, Until::Intersection)], 0);
        let a = select_action(&plan, &conns, previous);
        prop_assert!(Some(a.target) != previous);
        prop_assert_eq!(a.direction, conns[i].dir);
    }

    #[test]
    fn plan_is_kept_while_goal_and_roads_hold(gx in -60i32..60, gy in -60i32..60) {
        prop_assume!(gx.abs() + gy.abs() >= 2);
        let conns: Vec<ConnectionView> = [Octant::N, Octant::E, Octant::S, Octant::W]
            .iter()
            .enumerate()
            .map(|(i, &dir)| {
                let (dx, dy) = dir.grid_step();
                ConnectionView { dir, node: NodeId(i as u64 + 1), coord: Coord::new(dx as f64, dy as f64), visits: 0 }
            })
            .collect();
        let delta = Coord::new(gx as f64, gy as f64);
        let input = |plan| PlanningInput {
            plan,
            belief: Belief::Goal { estimate: GoalEstimate::new(delta, EstimateSource::Fused, 0), delta },
            connections: conns.clone(),
            previous: None,
            last_move: None,
            step: 1,
        };
        let first = synthesize_plan(&input(None));
        let next = plan_step(&input(Some(first.clone())));
        prop_assert!(!next.replanned);
        prop_assert_eq!(next.plan.subgoals, first.subgoals);
    }

    #[test]
    fn cursor_never_moves_back(
        sgs in proptest::collection::vec(subgoal(), 1..5),
        ctxs in proptest::collection::vec((1usize..5, any::<bool>()), 1..20),
    ) {
        let mut plan = Plan::new(sgs, 0);
        let mut last = plan.cursor;
        for (degree, at_goal) in ctxs {
            plan.advance(&UntilContext { degree, available: vec![Octant::N, Octant::E], at_goal, moves_under: 0 });
            prop_assert!(plan.cursor >= last);
            prop_assert!(plan.cursor <= plan.subgoals.len());
            last = plan.cursor;
            plan.moves_under += 1;
        }
    }
}

// ---- reasoner text ----

fn decision_strategy() -> impl Strategy<Value = ParsedDecision> {
    (
        proptest::option::of(octant()),
        proptest::option::of(any::<bool>()),
        proptest::option::of(proptest::collection::vec(subgoal(), 1..4)),
        proptest::option::of(1usize..5),
        proptest::option::of("[A-Za-z ,.()0-9-]{0,60}"),
    )
        .prop_map(|(action, yn, plan, state, reason)| {
            let mut d = ParsedDecision {
                action,
                yes_or_no: yn,
                new_plan: plan.map(|p| p.iter().enumerate().map(|(i, s)| format!("{}. {}", i + 1, s.render())).collect()),
                current_state: state.map(|s| format!("Step {s}")),
                ..Default::default()
            };
            if let Some(r) = reason {
                d.extra.insert("action_reason".into(), r);
            }
            d
        })
}

proptest! {
    #[test]
    fn decision_text_round_trips(d in decision_strategy()) {
        prop_assume!(!d.is_empty());
        let back = parse_decision(&render_decision(&d)).expect("parses");
        prop_assert_eq!(back, d);
    }
}

// ---- tasks and metrics ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sampled_tasks_are_consistent(seed in 0u64..1000, mu in 8.0f64..25.0) {
        let env = common::grid(20, 20, 0.15, 5, 0.4, seed);
        let tasks = sample_tasks(&env, 20, mu, 5.0, seed).unwrap();
        prop_assert_eq!(&tasks, &sample_tasks(&env, 20, mu, 5.0, seed).unwrap());
        for t in &tasks {
            prop_assert!(t.start != t.goal);
            prop_assert_eq!(env.shortest_path_len(t.start, t.goal).unwrap(), Some(t.min_steps));
            prop_assert_eq!(t.budget, budget_for(t.min_steps));
            prop_assert!(!t.description.r1.is_empty());
            let goal = env.coord(t.goal).unwrap();
            for a in &t.description.r1 {
                let lm = env.landmark(a.landmark).unwrap();
                let said = RelPos::new(a.rel.bearing_deg, approx_meters(a.rel.distance_m) as f64);
                let back = lm.coord + said.to_delta();
                prop_assert!((back.x - goal.x).abs() * 50.0 <= 5.0 + 1e-9);
                prop_assert!((back.y - goal.y).abs() * 50.0 <= 5.0 + 1e-9);
            }
        }
    }
}

proptest! {
    #[test]
    fn spl_never_exceeds_success(rows in proptest::collection::vec((any::<bool>(), 1u32..80, 0u32..200), 1..40)) {
        let results: Vec<EpisodeResult> = rows
            .iter()
            .enumerate()
            .map(|(i, &(s, l, p))| EpisodeResult {
                task_id: format!("t{i}"),
                agent: "prep".into(),
                success: s,
                steps_taken: p,
                min_steps: l,
                budget: budget_for(l),
                path: vec![],
                failure: None,
            })
            .collect();
        for r in &results {
            let v = spl(r.success, r.min_steps, r.steps_taken).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v <= r.success as u8 as f64);
        }
        let rep = BatchReport::from_results(&results).unwrap();
        let s = rep.summary("prep").unwrap();
        prop_assert!(s.spl <= s.sr + 1e-9);
        prop_assert_eq!(s.successes, rows.iter().filter(|r| r.0).count());
        let mean: f64 = rep.rows.iter().map(|r| r.spl).sum::<f64>() / rep.rows.len() as f64;
        prop_assert!((s.spl - 100.0 * mean).abs() < 1e-9);
    }
}
