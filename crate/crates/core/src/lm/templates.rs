//! Prompt templates and the renderer that fills them.
//!
//! Placeholders are `{name}` (must be bound to non-empty text) or `{name?}`
//! (may be empty; an empty segment also drops one adjacent space).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;

use super::LmError;

pub type Bindings = BTreeMap<String, String>;

/// Builds [`Bindings`] from `(name, value)` pairs.
pub fn bind<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    PerceptionVisible,
    PerceptionBox,
    PerceptionDistance,
    ReflectionSummary,
    ReflectionFuse,
    Planning,
    PlanningNoReflection,
    ActionNoPlanning,
    React,
    Cot,
    Im,
    ProgPrompt,
    Cap,
    Deps,
}

impl TemplateId {
    pub const ALL: [TemplateId; 14] = [
        TemplateId::PerceptionVisible,
        TemplateId::PerceptionBox,
        TemplateId::PerceptionDistance,
        TemplateId::ReflectionSummary,
        TemplateId::ReflectionFuse,
        TemplateId::Planning,
        TemplateId::PlanningNoReflection,
        TemplateId::ActionNoPlanning,
        TemplateId::React,
        TemplateId::Cot,
        TemplateId::Im,
        TemplateId::ProgPrompt,
        TemplateId::Cap,
        TemplateId::Deps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::PerceptionVisible => "perception_qa/visible",
            TemplateId::PerceptionBox => "perception_qa/bbox",
            TemplateId::PerceptionDistance => "perception_qa/distance",
            TemplateId::ReflectionSummary => "reflection_summary",
            TemplateId::ReflectionFuse => "reflection_fuse",
            TemplateId::Planning => "planning",
            TemplateId::PlanningNoReflection => "planning_no_reflection",
            TemplateId::ActionNoPlanning => "action_no_planning",
            TemplateId::React => "react",
            TemplateId::Cot => "cot",
            TemplateId::Im => "im",
            TemplateId::ProgPrompt => "progprompt",
            TemplateId::Cap => "cap",
            TemplateId::Deps => "deps",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            TemplateId::PerceptionVisible => "Is the {landmark} visible in the image?",
            TemplateId::PerceptionBox => {
                "The {landmark} is visible in the image, what's the bounding box of it in the image?"
            }
            TemplateId::PerceptionDistance => {
                "The {landmark} is visible in the image and its bounding box is {bbox}, how far is it actually away from the camera?"
            }
            TemplateId::ReflectionSummary => {
                "Here is your memory list in time sequence.\n{memory_list}\nSummarize all your memory, what can you learn from it?"
            }
            TemplateId::ReflectionFuse => {
                "You are now at {position}. {inference_history?} Now you infer that the goal is in {current_inference}. According to all your inferences, what are the goal coordinates most likely to be? What is the corresponding goal direction from current position?"
            }
            TemplateId::Planning => {
                "You are now at {position}. Your current connection includes {directions}. {connection_details} {goal_sentences} {summary?} The plan is {plan}. Which step of the plan are you currently implementing? According to all information above, should the plan be updated?. If yes, show the new plan. According to your plan and current connection, choose one in {directions} as your next action."
            }
            TemplateId::PlanningNoReflection => {
                "You are now at {position}. Your current connection includes {directions}. {connection_details} {inference} The last plan is {plan}.\nWhich step of the plan are you currently implementing? According to all information above, should the plan be updated?. If yes, show the new plan. According to your plan and current connection, choose one in {directions} as your next action."
            }
            TemplateId::ActionNoPlanning => {
                "You are now at {position}. Your current connection includes {directions}. {connection_details} {goal_sentences} {summary?}\nAccording to all information above, choose one in {directions} as your next action."
            }
            TemplateId::React => {
                "You are now at {position}. Your current connection includes {directions}. {connection_details} {inference}\nAccording to all information above, choose one in {directions} as your next action."
            }
            TemplateId::Cot => {
                "You are now at {position}. Your current connection includes {directions}. {connection_details} {inference} According to all information above, choose one in {directions} as your next action."
            }
            TemplateId::Im => {
                "Scene:\nYou are now at {position}. Your current connection includes {directions}. {connection_details} {inference}\nPlanner:\n{plan}\nAccording to all information above, should the plan be updated?. If yes, show the new plan. According to your plan and current connection, choose one in {directions} as your next action."
            }
            TemplateId::ProgPrompt | TemplateId::Cap => {
                "You are now at {position}. Your current connection includes {directions}. {connection_details} {inference} The plan is:\n{plan}\nAccording to all information above, should the plan be updated?. If yes, show the new plan. According to your plan and current connection, choose one in {directions} as your next action."
            }
            TemplateId::Deps => {
                "You are now at {position}. Your current connection includes {directions}. {connection_details}\nPlanner:{plan}\nAccording to all information above, should the plan be updated? If yes, show the new plan. According to your plan and current connection, choose one in {directions} as your next action."
            }
        }
    }

    /// Placeholder names, in order of first appearance.
    pub fn placeholders(self) -> Vec<(&'static str, bool)> {
        let mut out: Vec<(&'static str, bool)> = Vec::new();
        for cap in placeholder_re().captures_iter(self.text()) {
            let name = cap.get(1).map(|m| m.as_str()).unwrap_or_default();
            if !out.iter().any(|(n, _)| *n == name) {
                out.push((name, cap.get(2).is_some()));
            }
        }
        out
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = LmError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| LmError::Config(format!("unknown template '{s}'")))
    }
}

/// System turn sent ahead of every remote chat request. Written for this crate;
/// the per-method user prompts above carry the fixed wording.
pub const SYSTEM_PREAMBLE: &str = "You are an agent walking through a city road network toward a destination you cannot see. Coordinates are (x, y) in steps of 50 meters, with x growing to the east and y to the north. Reply with one \"key\": \"value\" pair per line using the keys the question asks for.";

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)(\?)?\}").expect("static regex"))
}

/// Fills `template` from `bindings`.
pub fn render_prompt(template: TemplateId, bindings: &Bindings) -> Result<String, LmError> {
    let text = template.text();
    let mut out = String::with_capacity(text.len() + 256);
    let mut last = 0;
    let mut eat_space = false;
    for cap in placeholder_re().captures_iter(text) {
        let m = cap.get(0).expect("whole match");
        let literal = &text[last..m.start()];
        out.push_str(if eat_space { literal.strip_prefix(' ').unwrap_or(literal) } else { literal });
        eat_space = false;
        let name = &cap[1];
        let optional = cap.get(2).is_some();
        let value = bindings.get(name).map(String::as_str).unwrap_or("");
        if value.trim().is_empty() {
            if !optional {
                return Err(LmError::Unbound {
                    template: template.name(),
                    name: name.to_string(),
                });
            }
            // drop the separator the absent segment would have used
            if out.ends_with(' ') {
                out.pop();
            } else {
                eat_space = true;
            }
        } else {
            out.push_str(value);
        }
        last = m.end();
    }
    let tail = &text[last..];
    out.push_str(if eat_space { tail.strip_prefix(' ').unwrap_or(tail) } else { tail });
    Ok(out)
}

/// "first", "second", ... "tenth", then "11th", "12th", "21st".
pub fn ordinal(n: usize) -> String {
    const WORDS: [&str; 10] = [
        "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
        "tenth",
    ];
    if (1..=10).contains(&n) {
        return WORDS[n - 1].to_string();
    }
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}
