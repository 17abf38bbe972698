use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, LmError, Reasoner};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt_hash: String,
    pub answer: String,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, LmError> {
    let io = |source| LmError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let e: TranscriptEntry = serde_json::from_str(&line)
            .map_err(|e| LmError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Pending answers per prompt hash, and the last one served.
type Queues = HashMap<String, (VecDeque<String>, Option<String>)>;

/// Answers from a recorded transcript. Repeated prompts are served their
/// recorded answers in order; the last one is reused once a queue runs dry.
#[derive(Debug)]
pub struct ReplayReasoner {
    queues: Mutex<Queues>,
}

impl ReplayReasoner {
    pub fn new(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut queues: Queues = HashMap::new();
        for e in entries {
            queues.entry(e.prompt_hash).or_default().0.push_back(e.answer);
        }
        ReplayReasoner {
            queues: Mutex::new(queues),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LmError> {
        Ok(ReplayReasoner::new(read_transcript(path)?))
    }
}

impl Reasoner for ReplayReasoner {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LmError> {
        let hash = req.hash();
        let mut queues = self.queues.lock().unwrap_or_else(|e| e.into_inner());
        let (queue, last) = queues
            .get_mut(&hash)
            .ok_or_else(|| LmError::ReplayMiss(hash.clone()))?;
        match queue.pop_front() {
            Some(a) => {
                *last = Some(a.clone());
                Ok(a)
            }
            None => last.clone().ok_or(LmError::ReplayMiss(hash)),
        }
    }
}

/// Wraps a backend and appends every exchange to a transcript file.
pub struct RecordingReasoner<R> {
    inner: R,
    path: PathBuf,
    sink: Mutex<File>,
}

impl<R: Reasoner> RecordingReasoner<R> {
    pub fn new(inner: R, path: &Path) -> Result<Self, LmError> {
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LmError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(RecordingReasoner {
            inner,
            path: path.to_path_buf(),
            sink: Mutex::new(sink),
        })
    }
}

impl<R: Reasoner> Reasoner for RecordingReasoner<R> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LmError> {
        let answer = self.inner.complete(req)?;
        let entry = TranscriptEntry {
            prompt_hash: req.hash(),
            answer: answer.clone(),
        };
        let line = serde_json::to_string(&entry).expect("entry serializes");
        let mut sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(sink, "{line}").map_err(|source| LmError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(answer)
    }
}

impl Reasoner for Box<dyn Reasoner> {
    fn name(&self) -> &str {
        self.as_ref().name()
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, LmError> {
        self.as_ref().complete(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{bind, ScriptedInput, TemplateId};

    fn req(landmark: &str) -> ChatRequest {
        ChatRequest::build(
            TemplateId::PerceptionVisible,
            &bind([("landmark", landmark)]),
            ScriptedInput::None,
        )
        .unwrap()
    }

    #[test]
    fn replays_in_order_then_repeats_last() {
        let r = ReplayReasoner::new([
            TranscriptEntry {
                prompt_hash: req("A").hash(),
                answer: "Yes.".into(),
            },
            TranscriptEntry {
                prompt_hash: req("A").hash(),
                answer: "No.".into(),
            },
        ]);
        assert_eq!(r.complete(&req("A")).unwrap(), "Yes.");
        assert_eq!(r.complete(&req("A")).unwrap(), "No.");
        assert_eq!(r.complete(&req("A")).unwrap(), "No.");
        assert!(matches!(r.complete(&req("B")), Err(LmError::ReplayMiss(_))));
    }

    struct Echo;
    impl Reasoner for Echo {
        fn name(&self) -> &str {
            "echo"
        }
        fn complete(&self, req: &ChatRequest) -> Result<String, LmError> {
            Ok(req.user_text().to_uppercase())
        }
    }

    #[test]
    fn recorded_transcript_replays_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let rec = RecordingReasoner::new(Echo, &path).unwrap();
        let first: Vec<String> = ["A", "B", "A"]
            .iter()
            .map(|l| rec.complete(&req(l)).unwrap())
            .collect();
        drop(rec);
        let replay = ReplayReasoner::from_file(&path).unwrap();
        let second: Vec<String> = ["A", "B", "A"]
            .iter()
            .map(|l| replay.complete(&req(l)).unwrap())
            .collect();
        assert_eq!(first, second);
    }
}
