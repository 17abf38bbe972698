use std::collections::BTreeMap;

use super::{render_decision, ChatRequest, LmError, ParsedDecision, Reasoner, ScriptedInput};
use crate::geom::{fmt_num, Coord};
use crate::memory::scripted_summary;
use crate::planner::{choose_action, plan_step};
use crate::spatial::{classify_direction, fuse_estimates, largest_cluster, GoalEstimate};

/// Deterministic reasoner that answers from the typed request payload using
/// the crate's own memory, spatial and planner logic.
#[derive(Debug, Clone, Default)]
pub struct ScriptedReasoner;

impl ScriptedReasoner {
    pub fn new() -> Self {
        ScriptedReasoner
    }
}

fn key_line(key: &str, value: &str) -> String {
    format!(
        "{}: {}",
        serde_json::to_string(key).expect("string serializes"),
        serde_json::to_string(value).expect("string serializes")
    )
}

/// Fusion answer with Q1 (goal coordinates) and Q2 (direction) blocks.
pub fn scripted_fuse_answer(
    position: Coord,
    history: &[GoalEstimate],
    current: &GoalEstimate,
    tau_steps: f64,
) -> String {
    let mut all = history.to_vec();
    all.push(*current);
    let goal = fuse_estimates(&all, tau_steps).unwrap_or(current.coord);
    let members = largest_cluster(&all, tau_steps).unwrap_or_default();
    let listed = members
        .iter()
        .map(|&i| all[i].coord.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let outliers = all.len() - members.len();
    let thought1 = format!(
        "The inferences that agree within {} steps of each other are {}. Averaging them and rounding gives {}. {} other inference{} treated as outlier{}.",
        fmt_num(tau_steps),
        listed,
        goal,
        outliers,
        if outliers == 1 { " is" } else { "s are" },
        if outliers == 1 { "" } else { "s" },
    );
    let delta = goal - position;
    let label = classify_direction(delta);
    let thought2 = format!(
        "From {} to {} the x-coordinate changes by {} and the y-coordinate by {}, so the goal lies {}.",
        position,
        goal,
        fmt_num(delta.x),
        fmt_num(delta.y),
        label
    );
    [
        key_line("Thought_Q1", &thought1),
        key_line(
            "Answer_Q1",
            &format!("The goal coordinates are most likely to be {goal}."),
        ),
        key_line("Thought_Q2", &thought2),
        key_line(
            "Answer_Q2",
            &format!("The goal {goal} is in {label} from current position {position}."),
        ),
    ]
    .join("\n")
}

impl Reasoner for ScriptedReasoner {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LmError> {
        match &req.input {
            ScriptedInput::Summary { records } => Ok(scripted_summary(records)),
            ScriptedInput::Fuse {
                position,
                history,
                current,
                tau_steps,
            } => Ok(scripted_fuse_answer(*position, history, current, *tau_steps)),
            ScriptedInput::Plan(input) => {
                let step = plan_step(input);
                let mut extra = BTreeMap::new();
                extra.insert("action_reason".to_string(), step.action.reason.clone());
                let d = ParsedDecision {
                    action: Some(step.action.direction),
                    yes_or_no: Some(step.replanned),
                    new_plan: step.replanned.then(|| step.plan.lines()),
                    current_state: Some(format!("Step {}", step.current_state())),
                    extra,
                };
                Ok(render_decision(&d))
            }
            ScriptedInput::Act(input) => {
                let a = choose_action(input);
                let mut extra = BTreeMap::new();
                extra.insert("action_reason".to_string(), a.reason);
                Ok(render_decision(&ParsedDecision {
                    action: Some(a.direction),
                    extra,
                    ..Default::default()
                }))
            }
            ScriptedInput::None => Err(LmError::Unsupported {
                backend: "scripted",
                template: req.template.name(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::NodeId;
    use crate::geom::Octant;
    use crate::lm::{find_coord, parse_decision};
    use crate::planner::{Belief, ConnectionView, Plan, PlanningInput, SubGoal, Until};
    use crate::spatial::EstimateSource;

    #[test]
    fn fusion_answer_names_goal_and_direction() {
        let e = |x, y| GoalEstimate::new(Coord::new(x, y), EstimateSource::Perceived, 0);
        let text = scripted_fuse_answer(
            Coord::new(22.0, 17.0),
            &[e(54.0, -26.0), e(58.0, -25.0), e(19.0, -24.0)],
            &e(22.0, -5.0),
            10.0,
        );
        let d = parse_decision(&text).unwrap();
        assert_eq!(
            d.extra["Answer_Q1"],
            "The goal coordinates are most likely to be (56, -26)."
        );
        assert_eq!(find_coord(&d.extra["Answer_Q1"]), Some(Coord::new(56.0, -26.0)));
        assert_eq!(
            d.extra["Answer_Q2"],
            "The goal (56, -26) is in Southeast (more towards south) from current position (22, 17)."
        );
    }

    #[test]
    fn planning_answer_keeps_plan_and_goes_south() {
        let plan = Plan::new(
            vec![
                SubGoal::new(Octant::S, Until::Intersection),
                SubGoal::new(Octant::S, Until::Intersection),
                SubGoal::new(Octant::E, Until::Intersection),
            ],
            0,
        );
        let goal = GoalEstimate::new(Coord::new(56.0, -26.0), EstimateSource::Fused, 9);
        let pos = Coord::new(22.0, 17.0);
        let input = PlanningInput {
            plan: Some(plan),
            belief: Belief::from_estimate(Some(goal), pos),
            connections: vec![
                ConnectionView {
                    dir: Octant::N,
                    node: NodeId(1),
                    coord: Coord::new(22.0, 18.0),
                    visits: 1,
                },
                ConnectionView {
                    dir: Octant::S,
                    node: NodeId(2),
                    coord: Coord::new(22.0, 16.0),
                    visits: 0,
                },
            ],
            previous: Some(NodeId(1)),
            last_move: Some(Octant::S),
            step: 10,
        };
        let req = ChatRequest {
            template: crate::lm::TemplateId::Planning,
            turns: vec![],
            input: ScriptedInput::Plan(Box::new(input)),
        };
        let text = ScriptedReasoner.complete(&req).unwrap();
        assert!(text.contains("\"action\": \"South\""), "{text}");
        let d = parse_decision(&text).unwrap();
        assert_eq!(d.current_state.as_deref(), Some("Step 1"));
        assert_eq!(d.yes_or_no, Some(false));
        assert!(d.new_plan.is_none());
    }

    #[test]
    fn untyped_prompt_is_unsupported() {
        let req = ChatRequest {
            template: crate::lm::TemplateId::Cot,
            turns: vec![],
            input: ScriptedInput::None,
        };
        assert!(matches!(
            ScriptedReasoner.complete(&req),
            Err(LmError::Unsupported { .. })
        ));
    }
}
