//! Language-model backends behind one [`Reasoner`] trait: a deterministic
//! scripted reasoner, transcript replay and a remote chat endpoint.

mod parse;
mod remote;
mod replay;
mod scripted;
pub mod templates;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::Coord;
use crate::http::{EndpointConfig, TransportError};
use crate::memory::EpisodicRecord;
use crate::planner::{ActionInput, PlanningInput};
use crate::spatial::GoalEstimate;

pub use parse::{find_coord, find_direction, parse_decision, render_decision, ParsedDecision};
pub use remote::RemoteReasoner;
pub use replay::{read_transcript, RecordingReasoner, ReplayReasoner, TranscriptEntry};
pub use scripted::{scripted_fuse_answer, ScriptedReasoner};
pub use templates::{bind, render_prompt, Bindings, TemplateId, SYSTEM_PREAMBLE};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("template {template}: placeholder '{name}' is unbound")]
    Unbound { template: &'static str, name: String },
    #[error("chat turn content must not be empty")]
    EmptyTurn,
    #[error("could not parse reply: {0}")]
    Parse(String),
    #[error("no recorded answer for prompt hash {0}")]
    ReplayMiss(String),
    #[error("{backend} backend cannot answer {template} prompts")]
    Unsupported {
        backend: &'static str,
        template: &'static str,
    },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("transcript {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LmError {
    /// Errors a caller cannot recover from by falling back to local logic.
    pub fn is_fatal(&self) -> bool {
        matches!(self, LmError::Transport(_) | LmError::ReplayMiss(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: ChatRole,
    pub content: String,
}

impl ChatTurn {
    pub fn new(role: ChatRole, content: impl Into<String>) -> Result<Self, LmError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(LmError::EmptyTurn);
        }
        Ok(ChatTurn { role, content })
    }
}

/// Typed view of a prompt for the scripted backend. Text backends ignore it.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedInput {
    None,
    Summary {
        records: Vec<EpisodicRecord>,
    },
    Fuse {
        position: Coord,
        history: Vec<GoalEstimate>,
        current: GoalEstimate,
        tau_steps: f64,
    },
    Plan(Box<PlanningInput>),
    Act(Box<ActionInput>),
}

#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub template: TemplateId,
    pub turns: Vec<ChatTurn>,
    pub input: ScriptedInput,
}

impl ChatRequest {
    /// Renders `template` into a system + user exchange.
    pub fn build(
        template: TemplateId,
        bindings: &Bindings,
        input: ScriptedInput,
    ) -> Result<Self, LmError> {
        let user = render_prompt(template, bindings)?;
        Ok(ChatRequest {
            template,
            turns: vec![
                ChatTurn::new(ChatRole::System, SYSTEM_PREAMBLE)?,
                ChatTurn::new(ChatRole::User, user)?,
            ],
            input,
        })
    }

    pub fn user_text(&self) -> &str {
        self.turns
            .iter()
            .rev()
            .find(|t| t.role == ChatRole::User)
            .map(|t| t.content.as_str())
            .unwrap_or("")
    }

    pub fn hash(&self) -> String {
        prompt_hash(&self.turns)
    }
}

/// SHA-256 over the whitespace-collapsed conversation.
pub fn prompt_hash(turns: &[ChatTurn]) -> String {
    let mut h = Sha256::new();
    for t in turns {
        let role = match t.role {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        };
        h.update(role.as_bytes());
        h.update([0u8]);
        let collapsed = t.content.split_whitespace().collect::<Vec<_>>().join(" ");
        h.update(collapsed.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

pub trait Reasoner: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<String, LmError>;
}

/// Remote sampling parameters; the scripted backend ignores them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub model: String,
    pub temperature: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            model: "gpt-4-turbo".into(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReasonerConfig {
    pub sampling: SamplingConfig,
    /// Falls back to NAV_LM_ENDPOINT / NAV_LM_API_KEY when unset.
    pub endpoint: Option<EndpointConfig>,
    /// Transcript read by the replay backend.
    pub transcript: Option<PathBuf>,
}

type Factory = Box<dyn Fn(&ReasonerConfig) -> Result<Box<dyn Reasoner>, LmError> + Send + Sync>;

/// Reasoning backends selectable by name.
pub struct ReasonerRegistry {
    factories: BTreeMap<String, Factory>,
}

impl ReasonerRegistry {
    pub fn empty() -> Self {
        ReasonerRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = ReasonerRegistry::empty();
        reg.register("scripted", |_| Ok(Box::new(ScriptedReasoner::new())));
        reg.register("replay", |cfg| {
            let path = cfg
                .transcript
                .as_ref()
                .ok_or_else(|| LmError::Config("replay backend needs a transcript".into()))?;
            Ok(Box::new(ReplayReasoner::from_file(path)?))
        });
        reg.register("remote", |cfg| {
            let endpoint = match &cfg.endpoint {
                Some(e) => e.clone(),
                None => EndpointConfig::from_env("NAV_LM_ENDPOINT", "NAV_LM_API_KEY")
                    .ok_or_else(|| LmError::Config("NAV_LM_ENDPOINT is not set".into()))?,
            };
            Ok(Box::new(RemoteReasoner::new(endpoint, cfg.sampling.clone())?))
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&ReasonerConfig) -> Result<Box<dyn Reasoner>, LmError> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, cfg: &ReasonerConfig) -> Result<Box<dyn Reasoner>, LmError> {
        let f = self.factories.get(name).ok_or_else(|| {
            LmError::Config(format!(
                "unknown backend '{name}' (known: {})",
                self.names().join(", ")
            ))
        })?;
        f(cfg)
    }
}

impl Default for ReasonerRegistry {
    fn default() -> Self {
        ReasonerRegistry::with_builtins()
    }
}

impl fmt::Debug for ReasonerRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

/// Callback through which agents route requests, so retry accounting stays
/// with the episode.
pub type Ask<'a> = dyn FnMut(&ChatRequest) -> Result<String, LmError> + 'a;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_turn_rejected() {
        assert!(matches!(ChatTurn::new(ChatRole::User, " \n"), Err(LmError::EmptyTurn)));
    }

    #[test]
    fn hash_ignores_whitespace_layout() {
        let a = vec![ChatTurn::new(ChatRole::User, "You are  now at\n(0, 0).").unwrap()];
        let b = vec![ChatTurn::new(ChatRole::User, "You are now at (0, 0). ").unwrap()];
        let c = vec![ChatTurn::new(ChatRole::User, "You are now at (0, 1).").unwrap()];
        assert_eq!(prompt_hash(&a), prompt_hash(&b));
        assert_ne!(prompt_hash(&a), prompt_hash(&c));
        assert_eq!(prompt_hash(&a).len(), 64);
    }

    #[test]
    fn registry_builtins() {
        let reg = ReasonerRegistry::with_builtins();
        assert_eq!(reg.names(), vec!["remote", "replay", "scripted"]);
        assert!(reg.build("replay", &ReasonerConfig::default()).is_err());
        assert_eq!(
            reg.build("scripted", &ReasonerConfig::default()).unwrap().name(),
            "scripted"
        );
    }
}
