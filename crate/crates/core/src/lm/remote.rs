use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatTurn, LmError, Reasoner, SamplingConfig};
use crate::http::{EndpointConfig, JsonEndpoint};

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: &'a [ChatTurn],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatReply {
    content: String,
}

/// Chat endpoint speaking `{"model","messages","temperature"}` → `{"content"}`.
#[derive(Debug)]
pub struct RemoteReasoner {
    endpoint: JsonEndpoint,
    sampling: SamplingConfig,
}

impl RemoteReasoner {
    pub fn new(cfg: EndpointConfig, sampling: SamplingConfig) -> Result<Self, LmError> {
        Ok(RemoteReasoner {
            endpoint: JsonEndpoint::new(cfg)?,
            sampling,
        })
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        self.endpoint.config()
    }
}

impl Reasoner for RemoteReasoner {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LmError> {
        let body = ChatBody {
            model: &self.sampling.model,
            messages: &req.turns,
            temperature: self.sampling.temperature,
        };
        let reply: ChatReply = self.endpoint.post(&body)?;
        Ok(reply.content)
    }
}
