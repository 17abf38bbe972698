//! Episodic records, periodic semantic summaries and the working-memory
//! reflection that turns perceived goal estimates into one fused belief.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::NodeId;
use crate::geom::{angular_deviation, bracket_list, Coord, Octant};
use crate::lm::{
    bind, find_coord, parse_decision, templates::ordinal, Ask, ChatRequest, LmError,
    ScriptedInput, TemplateId,
};
use crate::spatial::{
    anticipate_goal, component_phrase, fuse_estimates, EstimateSource, GoalEstimate,
    DEFAULT_TAU_STEPS,
};

/// Records per semantic summary.
pub const SUMMARY_WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("step {got} does not follow step {last:?}")]
    NonMonotoneStep { last: Option<u32>, got: u32 },
    #[error("action {action} is not among the options {options}")]
    IllegalAction { action: Octant, options: String },
    #[error(transparent)]
    Lm(#[from] LmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirOption {
    pub dir: Octant,
    pub visited: bool,
}

/// One navigation step as remembered by the agent. Coordinates are agent-frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicRecord {
    pub step: u32,
    pub node: NodeId,
    pub coord: Coord,
    pub options: Vec<DirOption>,
    pub action: Octant,
    pub arrived_node: NodeId,
    pub arrived: Coord,
    pub estimate: Option<GoalEstimate>,
}

impl EpisodicRecord {
    pub fn sentence(&self) -> String {
        let words: Vec<&str> = self.options.iter().map(|o| o.dir.word()).collect();
        format!(
            "You were at {}. You could move to {} from there. You chose to move to {}. You then arrived at {}.",
            self.coord,
            bracket_list(&words),
            self.action.word(),
            self.arrived
        )
    }
}

/// Fields recovered from a record sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRecord {
    pub coord: Coord,
    pub options: Vec<Octant>,
    pub action: Octant,
    pub arrived: Coord,
}

pub fn parse_record_sentence(text: &str) -> Option<ParsedRecord> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(
            r"^\s*(?:\d+\.\s*)?You were at \((-?[\d.]+), (-?[\d.]+)\)\. You could move to \[(.*)\] from there\. You chose to move to ([A-Za-z]+)\. You then arrived at \((-?[\d.]+), (-?[\d.]+)\)\.\s*$",
        )
        .expect("static regex")
    });
    let c = re.captures(text)?;
    let num = |i: usize| c[i].parse::<f64>().ok();
    let options: Option<Vec<Octant>> = c[3]
        .split(',')
        .map(|s| s.trim().trim_matches('\''))
        .filter(|s| !s.is_empty())
        .map(Octant::parse_loose)
        .collect();
    Some(ParsedRecord {
        coord: Coord::new(num(1)?, num(2)?),
        options: options?,
        action: Octant::parse_loose(&c[4])?,
        arrived: Coord::new(num(5)?, num(6)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticSummary {
    pub text: String,
    /// Inclusive step range covered.
    pub covers: (u32, u32),
}

/// Output of one reflection round.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingState {
    pub fused: Option<GoalEstimate>,
    pub anticipated: Option<GoalEstimate>,
    pub summary: Option<SemanticSummary>,
    pub retrieved: Vec<EpisodicRecord>,
    pub visited: BTreeSet<NodeId>,
}

impl WorkingState {
    pub fn is_lost(&self) -> bool {
        self.fused.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Memory {
    records: Vec<EpisodicRecord>,
    summaries: Vec<SemanticSummary>,
    visited: BTreeSet<NodeId>,
    perceived: Vec<GoalEstimate>,
    fused: Option<GoalEstimate>,
    window: usize,
    tau_steps: f64,
}

impl Default for Memory {
    fn default() -> Self {
        Memory::new(SUMMARY_WINDOW, DEFAULT_TAU_STEPS)
    }
}

impl Memory {
    pub fn new(window: usize, tau_steps: f64) -> Self {
        Memory {
            records: Vec::new(),
            summaries: Vec::new(),
            visited: BTreeSet::new(),
            perceived: Vec::new(),
            fused: None,
            window: window.max(1),
            tau_steps,
        }
    }

    pub fn records(&self) -> &[EpisodicRecord] {
        &self.records
    }

    pub fn summaries(&self) -> &[SemanticSummary] {
        &self.summaries
    }

    pub fn visited(&self) -> &BTreeSet<NodeId> {
        &self.visited
    }

    pub fn perceived(&self) -> &[GoalEstimate] {
        &self.perceived
    }

    pub fn fused(&self) -> Option<&GoalEstimate> {
        self.fused.as_ref()
    }

    pub fn record_step(&mut self, rec: EpisodicRecord) -> Result<(), MemoryError> {
        let last = self.records.last().map(|r| r.step);
        let expected = last.map_or(0, |s| s + 1);
        if rec.step != expected {
            return Err(MemoryError::NonMonotoneStep {
                last,
                got: rec.step,
            });
        }
        if !rec.options.iter().any(|o| o.dir == rec.action) {
            let words: Vec<&str> = rec.options.iter().map(|o| o.dir.word()).collect();
            return Err(MemoryError::IllegalAction {
                action: rec.action,
                options: bracket_list(&words),
            });
        }
        self.visited.insert(rec.node);
        self.visited.insert(rec.arrived_node);
        self.records.push(rec);
        Ok(())
    }

    /// Records not yet covered by a summary.
    fn unsummarized(&self) -> &[EpisodicRecord] {
        let done = self.summaries.last().map_or(0, |s| s.covers.1 as usize + 1);
        &self.records[done.min(self.records.len())..]
    }

    pub fn summary_due(&self) -> bool {
        self.unsummarized().len() >= self.window
    }

    /// Summarizes the next `window` records. Returns `Ok(None)` while fewer
    /// records are pending.
    pub fn summarize(&mut self, ask: &mut Ask<'_>) -> Result<Option<SemanticSummary>, MemoryError> {
        if !self.summary_due() {
            return Ok(None);
        }
        let batch: Vec<EpisodicRecord> = self.unsummarized()[..self.window].to_vec();
        let list = batch
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{}. {}", i + 1, r.sentence()))
            .collect::<Vec<_>>()
            .join("\n");
        let req = ChatRequest::build(
            TemplateId::ReflectionSummary,
            &bind([("memory_list", list)]),
            ScriptedInput::Summary {
                records: batch.clone(),
            },
        )?;
        let text = ask(&req)?;
        let summary = SemanticSummary {
            text: text.trim().to_string(),
            covers: (batch[0].step, batch[batch.len() - 1].step),
        };
        self.summaries.push(summary.clone());
        Ok(Some(summary))
    }

    /// Anticipate-reevaluate round.
    ///
    /// With a fresh perception the whole perceived history is fused (through
    /// the reasoner when one is given); without one the last fused goal is held
    /// fixed and re-read from the current position. No estimate ever yields a
    /// lost state.
    pub fn reflect(
        &mut self,
        perceived: Option<GoalEstimate>,
        position: Coord,
        neighbors: &[NodeId],
        step: u32,
        ask: Option<&mut Ask<'_>>,
    ) -> Result<WorkingState, MemoryError> {
        let mut anticipated = None;
        match perceived {
            Some(p) => {
                let local = {
                    let mut all = self.perceived.clone();
                    all.push(p);
                    fuse_estimates(&all, self.tau_steps).unwrap_or(p.coord)
                };
                let coord = match ask {
                    Some(ask) => match self.ask_fusion(ask, p, position) {
                        Ok(Some(c)) => c,
                        Ok(None) => {
                            log::warn!("fusion reply carried no coordinate; using local fusion");
                            local
                        }
                        Err(e) if e.is_fatal() => return Err(e.into()),
                        Err(e) => {
                            log::warn!("fusion prompt failed ({e}); using local fusion");
                            local
                        }
                    },
                    None => local,
                };
                self.perceived.push(p);
                self.fused = Some(GoalEstimate::new(coord, EstimateSource::Fused, step));
            }
            None => {
                if let Ok(a) = anticipate_goal(self.fused.as_ref(), position, step) {
                    anticipated = Some(a.estimate);
                }
            }
        }
        let retrieved = self
            .records
            .iter()
            .rev()
            .filter(|r| neighbors.contains(&r.node) && self.visited.contains(&r.node))
            .fold(Vec::<EpisodicRecord>::new(), |mut acc, r| {
                if !acc.iter().any(|x| x.node == r.node) {
                    acc.push(r.clone());
                }
                acc
            });
        Ok(WorkingState {
            fused: self.fused,
            anticipated,
            summary: self.summaries.last().cloned(),
            retrieved,
            visited: self.visited.clone(),
        })
    }

    fn ask_fusion(
        &self,
        ask: &mut Ask<'_>,
        current: GoalEstimate,
        position: Coord,
    ) -> Result<Option<Coord>, LmError> {
        let req = fusion_request(&self.perceived, current, position, self.tau_steps)?;
        let reply = ask(&req)?;
        let d = parse_decision(&reply)?;
        Ok(d.extra
            .get("Answer_Q1")
            .and_then(|a| find_coord(a))
            .or_else(|| find_coord(&reply)))
    }
}

pub fn fusion_request(
    history: &[GoalEstimate],
    current: GoalEstimate,
    position: Coord,
    tau_steps: f64,
) -> Result<ChatRequest, LmError> {
    let past = history
        .iter()
        .enumerate()
        .map(|(i, e)| format!("The {} time you inferred the goal was at {}.", ordinal(i + 1), e.coord))
        .collect::<Vec<_>>()
        .join(" ");
    ChatRequest::build(
        TemplateId::ReflectionFuse,
        &bind([
            ("position", position.to_string()),
            ("inference_history", past),
            ("current_inference", component_phrase(current.coord - position)),
        ]),
        ScriptedInput::Fuse {
            position,
            history: history.to_vec(),
            current,
            tau_steps,
        },
    )
}

struct Phase {
    from: Coord,
    to: Coord,
}

/// Deterministic summary: consecutive moves are merged into a phase while each
/// move stays within 45 degrees of the phase's net displacement.
pub fn scripted_summary(records: &[EpisodicRecord]) -> String {
    let mut phases: Vec<Phase> = Vec::new();
    for r in records {
        let joins = phases.last().is_some_and(|p| {
            let net = p.to - p.from;
            !net.is_zero() && angular_deviation(r.action.center_deg(), net.bearing_deg()) <= 45.0
        });
        match phases.last_mut() {
            Some(p) if joins => p.to = r.arrived,
            _ => phases.push(Phase {
                from: r.coord,
                to: r.arrived,
            }),
        }
    }
    if phases.is_empty() {
        return "You have not moved yet.".to_string();
    }
    let adj = |p: &Phase| Octant::from_bearing((p.to - p.from).bearing_deg()).adjective();
    let article = |w: &str| if w.starts_with('e') { "an" } else { "a" };
    let first = &phases[0];
    let a = adj(first);
    let mut text = format!(
        "In the past {} steps, you primarily moved in {} {} direction, transitioning from {} to {}",
        records.len(),
        article(a),
        a,
        first.from,
        first.to
    );
    for (i, p) in phases.iter().enumerate().skip(1) {
        let a = adj(p);
        let joiner = if i + 1 == phases.len() { ", and then" } else { ", then" };
        text.push_str(&format!(
            "{joiner} shifted to {} {} direction, moving from {} to {}",
            article(a),
            a,
            p.from,
            p.to
        ));
    }
    text.push('.');
    text
}
