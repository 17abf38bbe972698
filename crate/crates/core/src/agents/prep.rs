use rand::RngCore;

use super::{
    connection_details, directions_text, inference_text, legal_choice, perceived_goal,
    position_text, AgentError, AgentSetup, Asker, Decision, NavigationAgent, Observation,
};
use crate::lm::{bind, parse_decision, ChatRequest, LmError, ParsedDecision, ScriptedInput, TemplateId};
use crate::memory::{DirOption, EpisodicRecord, Memory, MemoryError, WorkingState};
use crate::planner::{
    choose_action, plan_step, select_action, ActionInput, ActionMode, Belief, Plan, PlanningInput,
};
use crate::spatial::{classify_direction, GoalEstimate};
use crate::taskgen::GoalDescription;

/// Which stages of the perceive-reflect-plan loop are wired in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepVariant {
    Full,
    /// Plans from the raw per-step estimate; no fusion, anticipation or retrieval.
    NoReflection,
    /// Reflects, then picks the road nearest the fused goal octant each step.
    NoPlanning,
}

pub struct PrepAgent {
    variant: PrepVariant,
    description: GoalDescription,
    memory: Memory,
    plan: Option<Plan>,
    asker: Asker,
}

impl PrepAgent {
    pub fn new(variant: PrepVariant, setup: &AgentSetup<'_>) -> Self {
        PrepAgent {
            variant,
            description: setup.description.clone(),
            memory: Memory::new(setup.summary_window, setup.tau_steps),
            plan: None,
            asker: Asker::new(setup.reasoner.clone(), setup.retry_budget),
        }
    }
}

/// Fatal reasoner errors end the episode; anything else is logged and the
/// caller falls back to local logic.
fn soften<T>(r: Result<T, MemoryError>) -> Result<Option<T>, AgentError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MemoryError::Lm(e)) if !e.is_fatal() => {
            log::warn!("reasoner reply unusable ({e}); continuing without it");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn parse_reply(r: Result<String, LmError>) -> Result<Option<ParsedDecision>, AgentError> {
    match r.and_then(|text| parse_decision(&text)) {
        Ok(d) => Ok(Some(d)),
        Err(e) if e.is_fatal() => Err(e.into()),
        Err(e) => {
            log::warn!("reasoner reply unusable ({e}); using local decision");
            Ok(None)
        }
    }
}

fn goal_sentences(estimate: Option<&GoalEstimate>, position: crate::geom::Coord) -> String {
    match estimate {
        Some(e) => format!(
            "The goal coordinates are most likely to be {c}. The goal {c} is in {} from current position {position}.",
            classify_direction(e.coord - position),
            c = e.coord
        ),
        None => "No landmark has been seen yet, so the goal location is unknown.".to_string(),
    }
}

fn working_estimate(ws: &WorkingState) -> Option<GoalEstimate> {
    ws.anticipated.or(ws.fused)
}

impl PrepAgent {
    fn reflect(&mut self, obs: &Observation<'_>) -> Result<Option<WorkingState>, AgentError> {
        let asker = &mut self.asker;
        let mut ask = |r: &ChatRequest| asker.ask(r);
        if self.memory.summary_due() {
            soften(self.memory.summarize(&mut ask))?;
        }
        let perceived = perceived_goal(obs.detections, &self.description, obs.position, obs.step);
        let neighbors: Vec<_> = obs.connections.iter().map(|c| c.node).collect();
        match self
            .memory
            .reflect(perceived, obs.position, &neighbors, obs.step, Some(&mut ask))
        {
            Ok(ws) => Ok(Some(ws)),
            Err(e) => soften::<WorkingState>(Err(e)),
        }
    }

    /// Applies a planning reply; unusable parts fall back to the local planner.
    fn apply_plan_reply(
        &self,
        reply: Option<ParsedDecision>,
        input: &PlanningInput,
    ) -> (Plan, crate::planner::ActionChoice) {
        let local = || {
            let s = plan_step(input);
            (s.plan, s.action)
        };
        let Some(d) = reply else {
            return local();
        };
        let replan = d.yes_or_no == Some(true) || input.plan.is_none();
        let plan = if replan {
            match d
                .new_plan
                .as_deref()
                .and_then(|lines| Plan::from_lines(lines, input.step))
            {
                Some(mut p) => {
                    p.explore = input.belief.heading().is_none();
                    p
                }
                None => {
                    log::warn!("reply asked for a new plan but gave none usable; replanning locally");
                    return local();
                }
            }
        } else {
            let mut p = input.plan.clone().expect("checked above");
            if let Some(k) = d.current_step() {
                let cursor = k.saturating_sub(1).min(p.subgoals.len());
                if cursor != p.cursor {
                    p.cursor = cursor;
                    p.moves_under = 0;
                }
            }
            p
        };
        let action = legal_choice(d.action, d.extra.get("action_reason"), &input.connections)
            .unwrap_or_else(|| {
                log::warn!("reply gave no legal action; following the plan locally");
                select_action(&plan, &input.connections, input.previous)
            });
        (plan, action)
    }

    fn plan_and_act(
        &mut self,
        obs: &Observation<'_>,
        estimate: Option<GoalEstimate>,
        template: TemplateId,
        context: String,
    ) -> Result<Decision, AgentError> {
        let input = PlanningInput {
            plan: self.plan.clone(),
            belief: Belief::from_estimate(estimate, obs.position),
            connections: obs.connections.to_vec(),
            previous: obs.previous,
            last_move: obs.last_move,
            step: obs.step,
        };
        let plan_text = self
            .plan
            .as_ref()
            .map(Plan::render_list)
            .unwrap_or_else(|| "[]".to_string());
        let mut b = bind([
            ("position", position_text(obs.position)),
            ("directions", directions_text(obs.connections)),
            ("connection_details", connection_details(obs.connections, true)),
            ("plan", plan_text),
        ]);
        match template {
            TemplateId::Planning => {
                b.insert("goal_sentences".into(), context);
                let summary = self.memory.summaries().last().map(|s| s.text.clone());
                b.insert("summary".into(), summary.unwrap_or_default());
            }
            _ => {
                b.insert("inference".into(), context);
            }
        }
        let req = ChatRequest::build(template, &b, ScriptedInput::Plan(Box::new(input.clone())))?;
        let reply = parse_reply(self.asker.ask(&req))?;
        let (mut plan, choice) = self.apply_plan_reply(reply, &input);
        plan.moves_under += 1;
        self.plan = Some(plan.clone());
        Ok(Decision {
            choice,
            estimate,
            plan: Some(plan),
        })
    }

    fn act_greedy(
        &mut self,
        obs: &Observation<'_>,
        estimate: Option<GoalEstimate>,
    ) -> Result<Decision, AgentError> {
        let belief = Belief::from_estimate(estimate, obs.position);
        let mode = match belief.heading() {
            Some(h) => ActionMode::Toward(classify_direction(h).octant.center_deg()),
            None => ActionMode::Explore {
                last_move: obs.last_move,
            },
        };
        let input = ActionInput {
            mode,
            connections: obs.connections.to_vec(),
            previous: obs.previous,
            use_memory: true,
        };
        let summary = self.memory.summaries().last().map(|s| s.text.clone());
        let b = bind([
            ("position", position_text(obs.position)),
            ("directions", directions_text(obs.connections)),
            ("connection_details", connection_details(obs.connections, true)),
            ("goal_sentences", goal_sentences(estimate.as_ref(), obs.position)),
            ("summary", summary.unwrap_or_default()),
        ]);
        let req = ChatRequest::build(
            TemplateId::ActionNoPlanning,
            &b,
            ScriptedInput::Act(Box::new(input.clone())),
        )?;
        let reply = parse_reply(self.asker.ask(&req))?;
        let choice = reply
            .and_then(|d| legal_choice(d.action, d.extra.get("action_reason"), obs.connections))
            .unwrap_or_else(|| choose_action(&input));
        Ok(Decision {
            choice,
            estimate,
            plan: None,
        })
    }

    fn remember(&mut self, obs: &Observation<'_>, d: &Decision) -> Result<(), AgentError> {
        let arrived = obs
            .connections
            .iter()
            .find(|c| c.node == d.choice.target)
            .map(|c| c.coord)
            .unwrap_or(obs.position);
        self.memory.record_step(EpisodicRecord {
            step: obs.step,
            node: obs.node,
            coord: obs.position,
            options: obs
                .connections
                .iter()
                .map(|c| DirOption {
                    dir: c.dir,
                    visited: c.visited(),
                })
                .collect(),
            action: d.choice.direction,
            arrived_node: d.choice.target,
            arrived,
            estimate: d.estimate,
        })?;
        Ok(())
    }
}

impl NavigationAgent for PrepAgent {
    fn name(&self) -> &str {
        match self.variant {
            PrepVariant::Full => "prep",
            PrepVariant::NoReflection => "prep_no_reflection",
            PrepVariant::NoPlanning => "prep_no_planning",
        }
    }

    fn decide(
        &mut self,
        obs: &Observation<'_>,
        _rng: &mut dyn RngCore,
    ) -> Result<Decision, AgentError> {
        let decision = match self.variant {
            PrepVariant::NoReflection => {
                let raw = perceived_goal(obs.detections, &self.description, obs.position, obs.step);
                let text = inference_text(raw.as_ref(), obs.position);
                return self.plan_and_act(obs, raw, TemplateId::PlanningNoReflection, text);
            }
            PrepVariant::Full => {
                let ws = self.reflect(obs)?;
                let est = ws.as_ref().and_then(working_estimate);
                let text = goal_sentences(est.as_ref(), obs.position);
                self.plan_and_act(obs, est, TemplateId::Planning, text)?
            }
            PrepVariant::NoPlanning => {
                let ws = self.reflect(obs)?;
                let est = ws.as_ref().and_then(working_estimate);
                self.act_greedy(obs, est)?
            }
        };
        self.remember(obs, &decision)?;
        Ok(decision)
    }
}
