use rand::{Rng, RngCore};

use super::{
    connection_details, directions_text, inference_text, legal_choice, perceived_goal,
    position_text, AgentError, AgentSetup, Asker, Decision, NavigationAgent, Observation,
};
use crate::lm::{bind, parse_decision, ChatRequest, ScriptedInput, TemplateId};
use crate::planner::{choose_action, ActionChoice, ActionInput, ActionMode};
use crate::taskgen::GoalDescription;

/// Uniformly random road each step.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomAgent;

impl NavigationAgent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(
        &mut self,
        obs: &Observation<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Decision, AgentError> {
        let c = &obs.connections[rng.random_range(0..obs.connections.len())];
        Ok(Decision {
            choice: ActionChoice {
                direction: c.dir,
                target: c.node,
                reason: "random".to_string(),
            },
            estimate: None,
            plan: None,
        })
    }
}

/// Memoryless agent: heads for the goal implied by the current detections,
/// or picks a random road when nothing is in view.
pub struct ReactAgent {
    description: GoalDescription,
    asker: Asker,
}

impl ReactAgent {
    pub fn new(setup: &AgentSetup<'_>) -> Self {
        ReactAgent {
            description: setup.description.clone(),
            asker: Asker::new(setup.reasoner.clone(), setup.retry_budget),
        }
    }
}

impl NavigationAgent for ReactAgent {
    fn name(&self) -> &str {
        "react"
    }

    fn decide(
        &mut self,
        obs: &Observation<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Decision, AgentError> {
        let estimate = perceived_goal(obs.detections, &self.description, obs.position, obs.step);
        let heading = estimate
            .map(|e| e.coord - obs.position)
            .filter(|d| !d.is_zero());
        let mode = match heading {
            Some(d) => ActionMode::Toward(d.bearing_deg()),
            None => ActionMode::Pick(rng.random_range(0..obs.connections.len())),
        };
        let input = ActionInput {
            mode,
            connections: obs.connections.to_vec(),
            previous: obs.previous,
            use_memory: false,
        };
        let b = bind([
            ("position", position_text(obs.position)),
            ("directions", directions_text(obs.connections)),
            ("connection_details", connection_details(obs.connections, false)),
            ("inference", inference_text(estimate.as_ref(), obs.position)),
        ]);
        let req = ChatRequest::build(TemplateId::React, &b, ScriptedInput::Act(Box::new(input.clone())))?;
        let parsed = match self.asker.ask(&req).and_then(|t| parse_decision(&t)) {
            Ok(d) => Some(d),
            Err(e) if e.is_fatal() => return Err(e.into()),
            Err(e) => {
                log::warn!("reasoner reply unusable ({e}); using local decision");
                None
            }
        };
        let choice = parsed
            .and_then(|d| legal_choice(d.action, d.extra.get("action_reason"), obs.connections))
            .unwrap_or_else(|| choose_action(&input));
        Ok(Decision {
            choice,
            estimate,
            plan: None,
        })
    }
}
