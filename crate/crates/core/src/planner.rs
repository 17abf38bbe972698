//! Long-term plans made of "move D until C" sub-goals, the rule for keeping or
//! replacing them, and the single-step action choice.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::env::NodeId;
use crate::geom::{angular_deviation, bracket_list, Coord, Octant};
use crate::spatial::GoalEstimate;

/// Deviation between goal and remaining plan direction that forces a new plan.
pub const REPLAN_DEVIATION_DEG: f64 = 90.0;

/// Distance in steps under which the agent considers itself at its goal estimate.
pub const ARRIVAL_RADIUS_STEPS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Until {
    Intersection,
    Blocked,
    Steps(u32),
    Arrival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGoal {
    pub direction: Octant,
    pub until: Until,
}

impl SubGoal {
    pub fn new(direction: Octant, until: Until) -> Self {
        SubGoal { direction, until }
    }

    /// Prompt wording, e.g. "Move South until an intersection."
    pub fn render(&self) -> String {
        let d = self.direction.word();
        match self.until {
            Until::Intersection => format!("Move {d} until an intersection."),
            Until::Blocked => format!("Move {d} until the road is blocked."),
            Until::Steps(1) => format!("Move {d} for 1 step."),
            Until::Steps(n) => format!("Move {d} for {n} steps."),
            Until::Arrival => format!("Move {d} until arriving at the goal."),
        }
    }

    /// Inverse of [`SubGoal::render`]; a leading "N. " is ignored.
    pub fn parse(text: &str) -> Option<SubGoal> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| {
            Regex::new(
                r"(?i)^\s*(?:\d+\.\s*)?move\s+([a-z-]+)\s+(until an intersection|until the road is blocked|until arriving at the goal|for (\d+) steps?)\.?\s*$",
            )
            .expect("static regex")
        });
        let cap = re.captures(text)?;
        let direction = Octant::parse_loose(&cap[1])?;
        let cond = cap[2].to_ascii_lowercase();
        let until = if cond.contains("intersection") {
            Until::Intersection
        } else if cond.contains("blocked") {
            Until::Blocked
        } else if cond.contains("arriving") {
            Until::Arrival
        } else {
            let n: u32 = cap.get(3)?.as_str().parse().ok()?;
            if n == 0 {
                return None;
            }
            Until::Steps(n)
        };
        Some(SubGoal { direction, until })
    }
}

impl fmt::Display for SubGoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub subgoals: Vec<SubGoal>,
    pub cursor: usize,
    pub created_step: u32,
    /// Moves made since the active sub-goal became active.
    pub moves_under: u32,
    /// Built without a goal estimate.
    pub explore: bool,
}

impl Plan {
    pub fn new(subgoals: Vec<SubGoal>, created_step: u32) -> Self {
        Plan {
            subgoals,
            cursor: 0,
            created_step,
            moves_under: 0,
            explore: false,
        }
    }

    pub fn exploration(direction: Octant, created_step: u32) -> Self {
        Plan {
            explore: true,
            ..Plan::new(vec![SubGoal::new(direction, Until::Intersection)], created_step)
        }
    }

    pub fn active(&self) -> Option<&SubGoal> {
        self.subgoals.get(self.cursor)
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.subgoals.len()
    }

    /// Numbered sub-goal strings: "1. Move South until an intersection."
    pub fn lines(&self) -> Vec<String> {
        self.subgoals
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s.render()))
            .collect()
    }

    /// Prompt form: "['1. Move ...', '2. Move ...']".
    pub fn render_list(&self) -> String {
        bracket_list(&self.lines())
    }

    /// Parses numbered sub-goal lines; `None` if any line is not a sub-goal.
    pub fn from_lines(lines: &[String], created_step: u32) -> Option<Plan> {
        let subgoals: Option<Vec<SubGoal>> = lines.iter().map(|l| SubGoal::parse(l)).collect();
        let subgoals = subgoals?;
        (!subgoals.is_empty()).then(|| Plan::new(subgoals, created_step))
    }

    /// Moves the cursor forward past every sub-goal whose condition holds.
    pub fn advance(&mut self, ctx: &UntilContext) {
        while let Some(sg) = self.active() {
            let here = UntilContext {
                moves_under: self.moves_under,
                ..ctx.clone()
            };
            if !check_until(sg, &here) {
                break;
            }
            self.cursor += 1;
            self.moves_under = 0;
        }
    }

    /// Sum of unit vectors of the sub-goals not yet completed.
    pub fn remaining_direction(&self) -> Coord {
        self.subgoals[self.cursor.min(self.subgoals.len())..]
            .iter()
            .fold(Coord::ORIGIN, |acc, s| acc + s.direction.unit())
    }
}

/// A road leaving the current node as the agent sees it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionView {
    pub dir: Octant,
    pub node: NodeId,
    /// Agent-frame position of the neighbor.
    pub coord: Coord,
    /// Times the agent has already stood on the neighbor.
    pub visits: u32,
}

impl ConnectionView {
    pub fn visited(&self) -> bool {
        self.visits > 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UntilContext {
    pub degree: usize,
    pub available: Vec<Octant>,
    pub at_goal: bool,
    pub moves_under: u32,
}

/// Whether a sub-goal's stopping condition holds at the current node.
/// Intersections and step counts only count once a move was made under the
/// sub-goal, so a plan made at a crossing does not finish its first leg at once.
pub fn check_until(sg: &SubGoal, ctx: &UntilContext) -> bool {
    match sg.until {
        Until::Intersection => ctx.moves_under >= 1 && ctx.degree >= 3,
        Until::Blocked => !ctx.available.contains(&sg.direction),
        Until::Steps(n) => ctx.moves_under >= n,
        Until::Arrival => ctx.at_goal,
    }
}

/// What the agent believes about the goal this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Belief {
    Lost,
    Goal { estimate: GoalEstimate, delta: Coord },
}

impl Belief {
    pub fn from_estimate(estimate: Option<GoalEstimate>, position: Coord) -> Belief {
        match estimate {
            Some(e) => Belief::Goal {
                estimate: e,
                delta: e.coord - position,
            },
            None => Belief::Lost,
        }
    }

    pub fn delta(&self) -> Option<Coord> {
        match self {
            Belief::Goal { delta, .. } => Some(*delta),
            Belief::Lost => None,
        }
    }

    pub fn at_goal(&self) -> bool {
        self.delta().is_some_and(|d| d.norm() < ARRIVAL_RADIUS_STEPS)
    }

    /// A usable direction to head in: known and not already reached.
    pub fn heading(&self) -> Option<Coord> {
        self.delta().filter(|d| d.norm() >= ARRIVAL_RADIUS_STEPS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChoice {
    pub direction: Octant,
    pub target: NodeId,
    pub reason: String,
}

/// Nodes entered this often are treated as part of a loop.
pub const LOOP_VISITS: u32 = 2;

fn usable(c: &ConnectionView, previous: Option<NodeId>) -> bool {
    Some(c.node) != previous
}

/// Candidates after the anti-backtrack rule: the road back is only offered
/// when it is the only road.
fn forward_options(conns: &[ConnectionView], previous: Option<NodeId>) -> Vec<&ConnectionView> {
    let fwd: Vec<&ConnectionView> = conns.iter().filter(|c| usable(c, previous)).collect();
    if fwd.is_empty() {
        conns.iter().collect()
    } else {
        fwd
    }
}

/// Orders candidates by deviation from `bearing`, then unvisited first, then
/// clockwise from the target octant.
fn rank_toward<'a>(
    bearing: f64,
    cands: &[&'a ConnectionView],
    use_visited: bool,
) -> Option<&'a ConnectionView> {
    let target = Octant::from_bearing(bearing);
    cands
        .iter()
        .min_by(|a, b| {
            let da = angular_deviation(a.dir.center_deg(), bearing);
            let db = angular_deviation(b.dir.center_deg(), bearing);
            let cw = |c: &ConnectionView| (c.dir.index() + 8 - target.index()) % 8;
            da.total_cmp(&db)
                .then_with(|| {
                    if use_visited {
                        a.visited().cmp(&b.visited())
                    } else {
                        std::cmp::Ordering::Equal
                    }
                })
                .then_with(|| cw(a).cmp(&cw(b)))
                .then_with(|| a.node.cmp(&b.node))
        })
        .copied()
}

fn choice(c: &ConnectionView, why: String) -> ActionChoice {
    ActionChoice {
        direction: c.dir,
        target: c.node,
        reason: why,
    }
}

fn visited_note(c: &ConnectionView) -> &'static str {
    if c.visited() {
        "it was visited before but is the best remaining option"
    } else {
        "it leads to an unvisited node"
    }
}

/// Picks the road closest to the active sub-goal's direction.
///
/// Panics if `conns` is empty; every node of a valid environment has a road.
pub fn select_action(
    plan: &Plan,
    conns: &[ConnectionView],
    previous: Option<NodeId>,
) -> ActionChoice {
    assert!(!conns.is_empty(), "select_action needs at least one connection");
    let sg = plan
        .active()
        .or_else(|| plan.subgoals.last())
        .copied()
        .unwrap_or(SubGoal::new(Octant::N, Until::Intersection));
    let cands = forward_options(conns, previous);
    let best = rank_toward(sg.direction.center_deg(), &cands, true).expect("non-empty");
    let reason = if cands.len() == 1 && Some(best.node) == previous {
        format!("{} is the only way out of this dead end.", best.dir.word())
    } else {
        format!(
            "{} is the closest available direction to the step '{}' and {}.",
            best.dir.word(),
            sg.render(),
            visited_note(best)
        )
    };
    choice(best, reason)
}

/// How a planless agent picks its move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionMode {
    /// Road nearest this bearing.
    Toward(f64),
    /// Road most in line with the last move, unvisited roads first.
    Explore { last_move: Option<Octant> },
    /// The road at this index of the connection list.
    Pick(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionInput {
    pub mode: ActionMode,
    pub connections: Vec<ConnectionView>,
    pub previous: Option<NodeId>,
    /// Apply the anti-backtrack rule and prefer unvisited roads.
    pub use_memory: bool,
}

pub fn choose_action(input: &ActionInput) -> ActionChoice {
    let conns = &input.connections;
    assert!(!conns.is_empty(), "choose_action needs at least one connection");
    let cands: Vec<&ConnectionView> = if input.use_memory {
        forward_options(conns, input.previous)
    } else {
        conns.iter().collect()
    };
    match input.mode {
        ActionMode::Toward(bearing) => {
            let best = rank_toward(bearing, &cands, input.use_memory).expect("non-empty");
            choice(
                best,
                format!(
                    "{} deviates least from the goal direction {:.0} degrees.",
                    best.dir.word(),
                    bearing
                ),
            )
        }
        ActionMode::Explore { last_move } => {
            let best = explore_choice(&cands, last_move).expect("non-empty");
            choice(
                best,
                format!(
                    "The goal has not been located, so {} is explored and {}.",
                    best.dir.word(),
                    visited_note(best)
                ),
            )
        }
        ActionMode::Pick(i) => {
            let best = &conns[i % conns.len()];
            choice(
                best,
                format!(
                    "No landmark is in view, so {} is picked at random.",
                    best.dir.word()
                ),
            )
        }
    }
}

fn explore_choice<'a>(
    cands: &[&'a ConnectionView],
    last_move: Option<Octant>,
) -> Option<&'a ConnectionView> {
    let bearing = last_move.map(|o| o.center_deg()).unwrap_or(0.0);
    let unvisited: Vec<&ConnectionView> = cands.iter().copied().filter(|c| !c.visited()).collect();
    if unvisited.is_empty() {
        rank_toward(bearing, cands, true)
    } else {
        rank_toward(bearing, &unvisited, true)
    }
}

/// Everything the planner sees at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningInput {
    pub plan: Option<Plan>,
    pub belief: Belief,
    pub connections: Vec<ConnectionView>,
    pub previous: Option<NodeId>,
    pub last_move: Option<Octant>,
    pub step: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub plan: Plan,
    pub replanned: bool,
    pub action: ActionChoice,
}

impl PlanStep {
    /// 1-based index of the sub-goal being carried out.
    pub fn current_state(&self) -> usize {
        (self.plan.cursor + 1).min(self.plan.subgoals.len().max(1))
    }
}

fn until_context(input: &PlanningInput) -> UntilContext {
    UntilContext {
        degree: input.connections.len(),
        available: input.connections.iter().map(|c| c.dir).collect(),
        at_goal: input.belief.at_goal(),
        moves_under: 0,
    }
}

/// Whether moving along `sg` right now makes sense.
fn feasible(
    sg: &SubGoal,
    conns: &[ConnectionView],
    previous: Option<NodeId>,
    heading: Option<Coord>,
) -> bool {
    let Some(c) = conns.iter().find(|c| c.dir == sg.direction) else {
        return false;
    };
    if !usable(c, previous) || c.visited() {
        return false;
    }
    match heading {
        Some(h) => sg.direction.unit().dot(h) > 1e-9,
        None => true,
    }
}

/// Keep-or-replace decision for an existing plan.
pub fn keep_plan(plan: &Plan, input: &PlanningInput) -> bool {
    let Some(sg) = plan.active() else {
        return false;
    };
    let heading = input.belief.heading();
    if plan.explore {
        return heading.is_none() && feasible(sg, &input.connections, input.previous, None);
    }
    let Some(h) = heading else {
        return false;
    };
    let net = plan.remaining_direction();
    if net.norm() < 1e-9 {
        return false;
    }
    angular_deviation(h.bearing_deg(), net.bearing_deg()) < REPLAN_DEVIATION_DEG
        && feasible(sg, &input.connections, input.previous, Some(h))
}

fn axis_dirs(delta: Coord) -> (Option<Octant>, Option<Octant>) {
    let v = (delta.y.abs() >= ARRIVAL_RADIUS_STEPS)
        .then_some(if delta.y > 0.0 { Octant::N } else { Octant::S });
    let h = (delta.x.abs() >= ARRIVAL_RADIUS_STEPS)
        .then_some(if delta.x > 0.0 { Octant::E } else { Octant::W });
    (v, h)
}

/// Rectilinear plan toward `delta`, dominant axis first, rotated or prefixed
/// with a detour so its first leg can be taken from here.
pub fn synthesize_plan(input: &PlanningInput) -> Plan {
    let conns = &input.connections;
    let open = |o: Octant| {
        conns
            .iter()
            .any(|c| c.dir == o && usable(c, input.previous) && !c.visited())
    };
    let Some(delta) = input.belief.heading() else {
        let cands = forward_options(conns, input.previous);
        let dir = explore_choice(&cands, input.last_move)
            .map(|c| c.dir)
            .unwrap_or(Octant::N);
        return Plan::exploration(dir, input.step);
    };
    let (v, h) = match Octant::from_bearing(delta.bearing_deg()) {
        // Small side offsets are left for a later replan.
        o if o.is_cardinal() && o.unit().y != 0.0 => (Some(o), None),
        o if o.is_cardinal() => (None, Some(o)),
        _ => axis_dirs(delta),
    };
    let legs = |first: Octant, second: Option<Octant>| -> Vec<SubGoal> {
        match second {
            Some(s) => vec![
                SubGoal::new(first, Until::Intersection),
                SubGoal::new(s, Until::Intersection),
                SubGoal::new(first, Until::Arrival),
            ],
            None => vec![SubGoal::new(first, Until::Arrival)],
        }
    };
    let (dom, other) = match (v, h) {
        (Some(v), Some(h)) if delta.x.abs() > delta.y.abs() => (h, Some(v)),
        (Some(v), h) => (v, h),
        (None, Some(h)) => (h, None),
        (None, None) => (Octant::from_bearing(delta.bearing_deg()), None),
    };
    let subgoals = if open(dom) {
        legs(dom, other)
    } else if let Some(o) = other.filter(|&o| open(o)) {
        legs(o, Some(dom))
    } else {
        // No axis road is free: step aside first, then resume.
        let cands = forward_options(conns, input.previous);
        let fresh: Vec<&ConnectionView> =
            cands.iter().copied().filter(|c| c.visits < LOOP_VISITS).collect();
        let pool = if fresh.is_empty() { &cands } else { &fresh };
        let detour = rank_toward(delta.bearing_deg(), pool, true)
            .map(|c| c.dir)
            .unwrap_or(dom);
        let mut sg = vec![SubGoal::new(detour, Until::Intersection)];
        match other {
            Some(o) => {
                sg.push(SubGoal::new(dom, Until::Intersection));
                sg.push(SubGoal::new(o, Until::Arrival));
            }
            None => sg.push(SubGoal::new(dom, Until::Arrival)),
        }
        sg
    };
    Plan::new(subgoals, input.step)
}

/// One planning round: advance the cursor, keep or replace the plan, act.
pub fn plan_step(input: &PlanningInput) -> PlanStep {
    let ctx = until_context(input);
    let mut replanned = true;
    let plan = match input.plan.clone() {
        Some(mut p) => {
            p.advance(&ctx);
            if keep_plan(&p, input) {
                replanned = false;
                p
            } else {
                synthesize_plan(input)
            }
        }
        None => synthesize_plan(input),
    };
    let action = select_action(&plan, &input.connections, input.previous);
    PlanStep {
        plan,
        replanned,
        action,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::EstimateSource;

    fn conn(dir: Octant, node: u64, visited: bool) -> ConnectionView {
        let (dx, dy) = dir.grid_step();
        ConnectionView {
            dir,
            node: NodeId(node),
            coord: Coord::new(dx as f64, dy as f64),
            visits: visited as u32,
        }
    }

    fn goal(delta: Coord) -> Belief {
        Belief::Goal {
            estimate: GoalEstimate::new(delta, EstimateSource::Fused, 0),
            delta,
        }
    }

    fn input(plan: Option<Plan>, belief: Belief, conns: Vec<ConnectionView>) -> PlanningInput {
        PlanningInput {
            plan,
            belief,
            connections: conns,
            previous: None,
            last_move: None,
            step: 0,
        }
    }

    #[test]
    fn subgoal_text_round_trip() {
        for o in Octant::ALL {
            for u in [Until::Intersection, Until::Blocked, Until::Arrival, Until::Steps(1), Until::Steps(7)] {
                let sg = SubGoal::new(o, u);
                assert_eq!(SubGoal::parse(&sg.render()), Some(sg));
                assert_eq!(SubGoal::parse(&format!("3. {}", sg.render())), Some(sg));
            }
        }
        assert_eq!(SubGoal::parse("Move South for 0 steps."), None);
        assert_eq!(SubGoal::parse("Head to the park."), None);
    }

    #[test]
    fn decomposition_dominant_axis_first() {
        let conns = vec![conn(Octant::N, 1, false), conn(Octant::E, 2, false), conn(Octant::S, 3, false)];
        let p = synthesize_plan(&input(None, goal(Coord::new(34.0, -43.0)), conns));
        assert_eq!(
            p.subgoals,
            vec![
                SubGoal::new(Octant::S, Until::Intersection),
                SubGoal::new(Octant::E, Until::Intersection),
                SubGoal::new(Octant::S, Until::Arrival),
            ]
        );
    }

    #[test]
    fn single_axis_goal_gives_single_leg() {
        let conns = vec![conn(Octant::N, 1, false), conn(Octant::S, 3, false)];
        let p = synthesize_plan(&input(None, goal(Coord::new(0.0, -22.0)), conns));
        assert_eq!(p.subgoals, vec![SubGoal::new(Octant::S, Until::Arrival)]);
    }

    #[test]
    fn plan_kept_while_on_track() {
        // goal due south, step 1 "Move South ..." active, South open
        let plan = Plan::new(
            vec![
                SubGoal::new(Octant::S, Until::Intersection),
                SubGoal::new(Octant::S, Until::Intersection),
                SubGoal::new(Octant::E, Until::Intersection),
            ],
            0,
        );
        let conns = vec![conn(Octant::N, 1, true), conn(Octant::S, 2, false)];
        let step = plan_step(&input(Some(plan.clone()), goal(Coord::new(0.0, -22.0)), conns));
        assert!(!step.replanned);
        assert_eq!(step.plan.subgoals, plan.subgoals);
        assert_eq!(step.current_state(), 1);
        assert_eq!(step.action.direction, Octant::S);
    }

    #[test]
    fn lost_explores_unvisited() {
        let conns = vec![conn(Octant::N, 1, true), conn(Octant::W, 2, false)];
        let step = plan_step(&input(None, Belief::Lost, conns));
        assert!(step.plan.explore);
        assert_eq!(step.plan.subgoals, vec![SubGoal::new(Octant::W, Until::Intersection)]);
        assert_eq!(step.action.direction, Octant::W);
    }

    #[test]
    fn select_prefers_unvisited_and_mentions_it() {
        let plan = Plan::new(vec![SubGoal::new(Octant::S, Until::Arrival)], 0);
        let conns = vec![conn(Octant::N, 1, true), conn(Octant::S, 2, false)];
        let a = select_action(&plan, &conns, None);
        assert_eq!(a.direction, Octant::S);
        assert!(a.reason.contains("unvisited"));
    }

    #[test]
    fn detour_skips_roads_into_a_loop() {
        // Goal south-west, both axis roads already walked. West leads into a
        // node seen twice, so the detour takes the fresh road east.
        let mut w = conn(Octant::W, 2, true);
        w.visits = 2;
        let conns = vec![conn(Octant::N, 1, true), w, conn(Octant::S, 3, true), conn(Octant::E, 4, false)];
        let mut inp = input(None, goal(Coord::new(-12.0, -15.0)), conns);
        inp.previous = Some(NodeId(1));
        let p = synthesize_plan(&inp);
        assert_eq!(p.subgoals[0], SubGoal::new(Octant::S, Until::Intersection));
        let mut s = conn(Octant::S, 3, true);
        s.visits = 3;
        inp.connections[2] = s;
        let p = synthesize_plan(&inp);
        assert_eq!(p.subgoals[0], SubGoal::new(Octant::E, Until::Intersection));
    }

    #[test]
    fn dead_end_reverses() {
        let plan = Plan::new(vec![SubGoal::new(Octant::N, Until::Arrival)], 0);
        let conns = vec![conn(Octant::S, 5, true)];
        let a = select_action(&plan, &conns, Some(NodeId(5)));
        assert_eq!(a.target, NodeId(5));
    }

    #[test]
    fn least_deviation_wins() {
        let plan = Plan::new(vec![SubGoal::new(Octant::E, Until::Arrival)], 0);
        let conns = vec![conn(Octant::NE, 1, false), conn(Octant::SW, 2, false)];
        assert_eq!(select_action(&plan, &conns, None).direction, Octant::NE);
    }

    #[test]
    fn equal_deviation_ties_go_clockwise() {
        let plan = Plan::new(vec![SubGoal::new(Octant::E, Until::Arrival)], 0);
        let conns = vec![conn(Octant::NE, 1, false), conn(Octant::SE, 2, false)];
        assert_eq!(select_action(&plan, &conns, None).direction, Octant::SE);
    }

    #[test]
    fn until_conditions() {
        let ctx = |degree, moves| UntilContext {
            degree,
            available: vec![Octant::N, Octant::S],
            at_goal: false,
            moves_under: moves,
        };
        let inter = SubGoal::new(Octant::S, Until::Intersection);
        assert!(check_until(&inter, &ctx(4, 1)));
        assert!(!check_until(&inter, &ctx(2, 1)));
        assert!(!check_until(&inter, &ctx(4, 0)));
        let three = SubGoal::new(Octant::S, Until::Steps(3));
        assert!(!check_until(&three, &ctx(2, 2)));
        assert!(check_until(&three, &ctx(2, 3)));
        assert!(check_until(&SubGoal::new(Octant::E, Until::Blocked), &ctx(2, 0)));
        assert!(!check_until(&SubGoal::new(Octant::S, Until::Blocked), &ctx(2, 0)));
        let mut at = ctx(2, 0);
        at.at_goal = true;
        assert!(check_until(&SubGoal::new(Octant::S, Until::Arrival), &at));
    }

    #[test]
    fn blocked_dominant_axis_swaps_order() {
        let conns = vec![conn(Octant::N, 1, false), conn(Octant::E, 2, false)];
        let p = synthesize_plan(&input(None, goal(Coord::new(34.0, -43.0)), conns));
        assert_eq!(p.subgoals[0], SubGoal::new(Octant::E, Until::Intersection));
        assert_eq!(p.subgoals[1].direction, Octant::S);
    }

    #[test]
    fn detour_when_no_axis_road() {
        let conns = vec![conn(Octant::N, 1, false), conn(Octant::W, 2, false)];
        let p = synthesize_plan(&input(None, goal(Coord::new(5.0, -5.0)), conns));
        assert_eq!(p.subgoals.len(), 3);
        assert!(matches!(p.subgoals[0].direction, Octant::N | Octant::W));
    }

    #[test]
    fn lines_round_trip() {
        let p = Plan::new(
            vec![SubGoal::new(Octant::S, Until::Intersection), SubGoal::new(Octant::E, Until::Arrival)],
            4,
        );
        assert_eq!(
            p.render_list(),
            "['1. Move South until an intersection.', '2. Move East until arriving at the goal.']"
        );
        assert_eq!(Plan::from_lines(&p.lines(), 4), Some(p));
    }
}
