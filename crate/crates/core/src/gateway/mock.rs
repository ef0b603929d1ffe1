//! Deterministic in-process backends for offline runs and tests.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, Completion, GenerationRequest};
use crate::corpus::Corpus;
use crate::prompt::{sentence_labels, serialize_labels, BOS, INST_CLOSE, INST_OPEN};

#[derive(Debug, Clone)]
pub enum MockScript {
    /// Answer each sentence with its own gold labels.
    EchoGold { labels: HashMap<String, String> },
    /// Same text for every request.
    Fixed(String),
    /// Per-sentence responses; unknown sentences are an error.
    FileScripted(HashMap<String, String>),
    /// Fail a seeded, reproducible fraction of requests with a transport error.
    FaultInject {
        rate: f64,
        seed: u64,
        inner: Box<MockScript>,
    },
}

#[derive(Deserialize)]
struct ScriptLine {
    sentence: String,
    text: String,
}

impl MockScript {
    /// Gold labels of every sentence in `corpus`, keyed by sentence text.
    /// The first occurrence wins when a sentence text repeats.
    pub fn echo_gold(corpus: &Corpus) -> Self {
        let mut labels = HashMap::new();
        for note in &corpus.notes {
            for s in &note.sentences {
                labels
                    .entry(s.text.clone())
                    .or_insert_with(|| serialize_labels(&sentence_labels(note, s.index)));
            }
        }
        MockScript::EchoGold { labels }
    }

    /// Load `{"sentence": ..., "text": ...}` lines.
    pub fn from_script_file(path: &Path) -> Result<Self, String> {
        let doc = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut map = HashMap::new();
        for (i, line) in doc.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: ScriptLine = serde_json::from_str(line)
                .map_err(|e| format!("{} line {}: {e}", path.display(), i + 1))?;
            map.insert(l.sentence, l.text);
        }
        Ok(MockScript::FileScripted(map))
    }

    pub fn fault_inject(rate: f64, seed: u64, inner: MockScript) -> Self {
        MockScript::FaultInject {
            rate: rate.clamp(0.0, 1.0),
            seed,
            inner: Box::new(inner),
        }
    }
}

/// The input sentence of a rendered prompt: the text of the final
/// `<s>[INST] ... [/INST]` turn. Prompts of another shape map to themselves.
pub fn prompt_input(prompt: &str) -> &str {
    let open = format!("{BOS}{INST_OPEN} ");
    let close = format!(" {INST_CLOSE}");
    match (prompt.rfind(&open), prompt.strip_suffix(&close)) {
        (Some(i), Some(head)) if i + open.len() <= head.len() => &head[i + open.len()..],
        _ => prompt,
    }
}

fn unit_interval(seed: u64, prompt: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(prompt.as_bytes());
    let d = h.finalize();
    let x = u64::from_le_bytes(d[..8].try_into().unwrap());
    (x >> 11) as f64 / (1u64 << 53) as f64
}

fn respond(script: &MockScript, request: &GenerationRequest) -> Result<String, BackendError> {
    match script {
        MockScript::EchoGold { labels } => Ok(labels
            .get(prompt_input(&request.prompt))
            .cloned()
            .unwrap_or_else(|| "[]".to_string())),
        MockScript::Fixed(t) => Ok(t.clone()),
        MockScript::FileScripted(map) => map
            .get(prompt_input(&request.prompt))
            .cloned()
            .ok_or_else(|| BackendError::Other("no scripted response for sentence".into())),
        MockScript::FaultInject { rate, seed, inner } => {
            if unit_interval(*seed, &request.prompt) < *rate {
                Err(BackendError::Transport("injected fault".into()))
            } else {
                respond(inner, request)
            }
        }
    }
}

pub struct MockBackend {
    script: MockScript,
    latency: f64,
}

impl MockBackend {
    /// Reports zero latency.
    pub fn new(script: MockScript) -> Self {
        MockBackend {
            script,
            latency: 0.0,
        }
    }

    /// Report a fixed simulated latency per call, in seconds.
    pub fn with_latency(mut self, seconds: f64) -> Self {
        self.latency = seconds.max(0.0);
        self
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<Completion, BackendError> {
        respond(&self.script, request).map(|text| Completion {
            text,
            latency: Some(self.latency),
        })
    }
}
