//! Chat-formatted prompt templates for inference and supervised fine-tuning.
//!
//! Layout of a rendered inference prompt:
//!
//! ```text
//! <s>[INST] <<SYS>>
//! {system prompt}
//! <</SYS>>
//! {instruction}[/INST]
//!
//! Sure, I'd be happy to help! </s>
//!
//! <s>[INST] {example sentence} [/INST]
//!
//! {example labels} </s>
//!
//! <s>[INST] {input} [/INST]
//! ```

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, Entity, Note, TaskSchema};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const INST_OPEN: &str = "[INST]";
pub const INST_CLOSE: &str = "[/INST]";
pub const SYS_OPEN: &str = "<<SYS>>";
pub const SYS_CLOSE: &str = "<</SYS>>";
pub const ACKNOWLEDGEMENT: &str = "Sure, I'd be happy to help!";
pub const INPUT_PLACEHOLDER: &str = "{input}";

/// Literals rejected inside sentences so they cannot forge template structure.
pub const SPECIAL_TOKENS: [&str; 6] = [INST_CLOSE, INST_OPEN, SYS_CLOSE, SYS_OPEN, EOS, BOS];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("sentence is empty")]
    EmptySentence,
    #[error("sentence contains the special token {token:?}")]
    SpecialToken { token: &'static str },
    #[error("entity {entity:?} does not occur in sentence {sentence:?}")]
    EntityNotInSentence { entity: String, sentence: String },
    #[error("requested {requested} few-shot sentences but only {available} are eligible")]
    NotEnoughSentences { requested: usize, available: usize },
    #[error("no sentences to export")]
    EmptySubset,
}

/// Reject a sentence containing any special-token literal.
pub fn check_sentence(sentence: &str) -> Result<(), PromptError> {
    if sentence.trim().is_empty() {
        return Err(PromptError::EmptySentence);
    }
    match SPECIAL_TOKENS.iter().find(|t| sentence.contains(*t)) {
        Some(token) => Err(PromptError::SpecialToken { token }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub text: String,
    pub entity_type: String,
}

impl Label {
    pub fn new(text: impl Into<String>, entity_type: impl Into<String>) -> Self {
        Label {
            text: text.into(),
            entity_type: entity_type.into(),
        }
    }
}

impl From<&Entity> for Label {
    fn from(e: &Entity) -> Self {
        Label::new(e.text.clone(), e.entity_type.clone())
    }
}

/// Serialize labels as `[{"entity": "X", "entity_type": "Y"}, ...]`.
pub fn serialize_labels<'a>(labels: impl IntoIterator<Item = &'a Label>) -> String {
    let body: Vec<String> = labels
        .into_iter()
        .map(|l| {
            format!(
                "{{\"entity\": {}, \"entity_type\": {}}}",
                serde_json::to_string(&l.text).expect("string"),
                serde_json::to_string(&l.entity_type).expect("string")
            )
        })
        .collect();
    format!("[{}]", body.join(", "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub sentence_text: String,
    pub entities: Vec<Label>,
}

impl FewShotExample {
    pub fn new(sentence_text: impl Into<String>, entities: Vec<Label>) -> Result<Self, PromptError> {
        let ex = FewShotExample {
            sentence_text: sentence_text.into(),
            entities,
        };
        check_sentence(&ex.sentence_text)?;
        for l in &ex.entities {
            if !ex.sentence_text.contains(&l.text) {
                return Err(PromptError::EntityNotInSentence {
                    entity: l.text.clone(),
                    sentence: ex.sentence_text.clone(),
                });
            }
        }
        Ok(ex)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub schema: TaskSchema,
    pub system_prompt: String,
    pub instruction: String,
    pub examples: Vec<FewShotExample>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub prompt: String,
    pub completion: String,
}

impl PromptTemplate {
    /// Template using the schema's own system prompt and instruction.
    pub fn new(schema: TaskSchema, examples: Vec<FewShotExample>) -> Self {
        PromptTemplate {
            system_prompt: schema.system_prompt.clone(),
            instruction: schema.instruction.clone(),
            schema,
            examples,
        }
    }

    fn render_with(&self, input: &str) -> String {
        let mut out = format!(
            "{BOS}{INST_OPEN} {SYS_OPEN}\n{}\n{SYS_CLOSE}\n{}{INST_CLOSE}\n\n{ACKNOWLEDGEMENT} {EOS}\n\n",
            self.system_prompt, self.instruction
        );
        for ex in &self.examples {
            out.push_str(&format!(
                "{BOS}{INST_OPEN} {} {INST_CLOSE}\n\n{} {EOS}\n\n",
                ex.sentence_text,
                serialize_labels(&ex.entities)
            ));
        }
        out.push_str(&format!("{BOS}{INST_OPEN} {input} {INST_CLOSE}"));
        out
    }

    /// Full prompt for one sentence, ending with `[/INST]`.
    pub fn render_inference_prompt(&self, sentence: &str) -> Result<String, PromptError> {
        check_sentence(sentence)?;
        Ok(self.render_with(sentence))
    }

    /// The template text with the literal `{input}` placeholder.
    pub fn snapshot(&self) -> String {
        self.render_with(INPUT_PLACEHOLDER)
    }

    /// SHA-256 of the snapshot, lowercase hex.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.snapshot().as_bytes()))
    }

    /// Training example: the inference prompt plus the gold labels as completion.
    pub fn render_sft_record(&self, sentence: &str, gold: &[Entity]) -> Result<SftRecord, PromptError> {
        let prompt = self.render_inference_prompt(sentence)?;
        for e in gold {
            if !sentence.contains(&e.text) {
                return Err(PromptError::EntityNotInSentence {
                    entity: e.text.clone(),
                    sentence: sentence.to_string(),
                });
            }
        }
        let labels: Vec<Label> = gold.iter().map(Label::from).collect();
        Ok(SftRecord {
            prompt,
            completion: format!("{} {EOS}", serialize_labels(&labels)),
        })
    }
}

/// Gold labels of one sentence, as they appear in prompts.
pub fn sentence_labels(note: &Note, sentence_index: usize) -> Vec<Label> {
    let s = &note.sentences[sentence_index];
    note.entities_in(s).into_iter().map(Label::from).collect()
}

/// Draw `k` distinct sentences as few-shot examples, deterministic in
/// `(corpus, k, seed)`. Sentences touched by a boundary-crossing entity or
/// containing special tokens are not eligible; `require_entities` further
/// restricts the pool to sentences with at least one gold entity.
pub fn sample_few_shot(
    corpus: &Corpus,
    k: usize,
    seed: u64,
    require_entities: bool,
) -> Result<Vec<FewShotExample>, PromptError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut pool = Vec::new();
    for note in &corpus.notes {
        let crossing = note.boundary_crossing();
        for s in &note.sentences {
            if crossing.iter().any(|e| e.start < s.end && s.start < e.end) {
                continue;
            }
            if check_sentence(&s.text).is_err() {
                continue;
            }
            let labels = sentence_labels(note, s.index);
            if require_entities && labels.is_empty() {
                continue;
            }
            pool.push((s.text.clone(), labels));
        }
    }
    if pool.len() < k {
        return Err(PromptError::NotEnoughSentences {
            requested: k,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|i| FewShotExample::new(pool[i].0.clone(), pool[i].1.clone()))
        .collect()
}

/// Fine-tuning hyperparameters recorded next to an SFT dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftManifest {
    pub learning_rate: f64,
    pub schedule: String,
    pub weight_decay: f64,
    pub seq_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub record_count: usize,
    pub template_digest: String,
}

impl SftManifest {
    pub fn new(record_count: usize, template_digest: String) -> Self {
        SftManifest {
            learning_rate: 2e-5,
            schedule: "cosine".into(),
            weight_decay: 0.1,
            seq_len: 4096,
            epochs: 2,
            batch_size: 1,
            record_count,
            template_digest,
        }
    }
}

/// One SFT record per sentence of `subset`, as JSON-Lines.
pub fn export_sft_dataset(
    subset: &Corpus,
    template: &PromptTemplate,
) -> Result<(String, SftManifest), PromptError> {
    let mut out = String::new();
    let mut count = 0;
    for note in &subset.notes {
        for s in &note.sentences {
            let gold: Vec<Entity> = note.entities_in(s).into_iter().cloned().collect();
            let rec = template.render_sft_record(&s.text, &gold)?;
            out.push_str(&serde_json::to_string(&rec).expect("serializable"));
            out.push('\n');
            count += 1;
        }
    }
    if count == 0 {
        return Err(PromptError::EmptySubset);
    }
    Ok((out, SftManifest::new(count, template.digest())))
}
