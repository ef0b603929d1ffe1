//! Post-processing of generated text into typed entity spans.
//!
//! Four steps run in order:
//! 1. keep only what follows the last `[/INST]`, cut at the next `[INST]` or `</s>`;
//! 2. mine `{...}` object candidates left to right and keep those with
//!    string `entity` and `entity_type` fields;
//! 3. locate each entity text in the sentence by exact, case-sensitive match,
//!    giving repeated surfaces successive occurrences;
//! 4. drop entity types outside the task schema.
//!
//! Nothing here returns an error. Unusable output shows up as a `failed`
//! status and in the drop counters.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Entity, LabelSource, Sentence, TaskSchema};
use crate::prompt::{EOS, INST_CLOSE, INST_OPEN};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawParsedEntity {
    pub text: String,
    pub entity_type: String,
}

/// Step 1: the generated continuation, stripped of chat markers.
pub fn extract_generated(raw: &str) -> &str {
    let tail = match raw.rfind(INST_CLOSE) {
        Some(i) => &raw[i + INST_CLOSE.len()..],
        None => raw,
    };
    let cut = [tail.find(INST_OPEN), tail.find(EOS)]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or(tail.len());
    &tail[..cut]
}

/// Index of the first `}` after `from` that is not inside a JSON string.
fn closing_brace(bytes: &[u8], from: usize) -> Option<usize> {
    let mut in_string = false;
    let mut escaped = false;
    for (j, &c) in bytes.iter().enumerate().skip(from) {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == b'\\' {
                escaped = true;
            } else if c == b'"' {
                in_string = false;
            }
        } else if c == b'"' {
            in_string = true;
        } else if c == b'}' {
            return Some(j);
        }
    }
    None
}

/// Non-greedy `{...}` candidates, scanned left to right. A candidate ends at
/// the first closing brace outside a string literal; nested objects are
/// therefore cut short and fail to parse, as with a plain lazy pattern.
pub fn brace_candidates(payload: &str) -> Vec<&str> {
    let bytes = payload.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = bytes[i..].iter().position(|&c| c == b'{') {
        let start = i + off;
        match closing_brace(bytes, start + 1) {
            Some(end) => {
                out.push(&payload[start..=end]);
                i = end + 1;
            }
            None => i = start + 1,
        }
    }
    out
}

fn parse_candidate(candidate: &str) -> Option<RawParsedEntity> {
    let obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(candidate).ok()?;
    let text = obj.get("entity")?.as_str()?;
    let entity_type = obj.get("entity_type")?.as_str()?;
    if text.is_empty() || entity_type.is_empty() {
        return None;
    }
    Some(RawParsedEntity {
        text: text.to_string(),
        entity_type: entity_type.to_string(),
    })
}

/// Step 2 with the number of candidates that were not usable objects.
pub fn extract_json_objects_counted(payload: &str) -> (Vec<RawParsedEntity>, usize) {
    let mut skipped = 0;
    let mut out = Vec::new();
    for c in brace_candidates(payload) {
        match parse_candidate(c) {
            Some(e) => out.push(e),
            None => skipped += 1,
        }
    }
    (out, skipped)
}

/// Step 2: entity objects mined from free text, in order of appearance.
pub fn extract_json_objects(payload: &str) -> Vec<RawParsedEntity> {
    extract_json_objects_counted(payload).0
}

/// Step 3: spans for each parsed entity, relative to `sentence`. Returns the
/// recovered entities and how many texts had no free occurrence left.
pub fn recover_spans(sentence: &str, parsed: &[RawParsedEntity]) -> (Vec<Entity>, usize) {
    let chars: Vec<char> = sentence.chars().collect();
    let mut consumed: HashMap<&str, BTreeSet<usize>> = HashMap::new();
    let mut out = Vec::new();
    let mut dropped = 0;
    for p in parsed {
        let needle: Vec<char> = p.text.chars().collect();
        let used = consumed.entry(p.text.as_str()).or_default();
        let hit = if needle.is_empty() || needle.len() > chars.len() {
            None
        } else {
            (0..=chars.len() - needle.len())
                .find(|&s| !used.contains(&s) && chars[s..s + needle.len()] == needle[..])
        };
        match hit {
            Some(start) => {
                used.insert(start);
                out.push(Entity::new(
                    start,
                    start + needle.len(),
                    p.text.clone(),
                    p.entity_type.clone(),
                    LabelSource::Weak,
                ));
            }
            None => dropped += 1,
        }
    }
    (out, dropped)
}

/// Step 4: keep entities whose type is in the schema.
pub fn filter_types(entities: Vec<Entity>, schema: &TaskSchema) -> (Vec<Entity>, usize) {
    let before = entities.len();
    let kept: Vec<Entity> = entities
        .into_iter()
        .filter(|e| schema.contains(&e.entity_type))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

fn is_empty_list(payload: &str) -> bool {
    let t = payload.trim();
    t.strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .is_some_and(|inner| inner.trim().is_empty())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelStatus {
    Ok,
    Empty,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakLabelResult {
    pub note_id: String,
    pub sentence_index: usize,
    pub status: LabelStatus,
    /// Note-level offsets.
    pub entities: Vec<Entity>,
    /// Entity objects found in the payload.
    pub parsed: usize,
    /// Brace candidates that were not entity objects.
    pub skipped_objects: usize,
    pub dropped_unrecovered: usize,
    pub dropped_bad_type: usize,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl WeakLabelResult {
    /// A sentence whose generation never produced text.
    pub fn generation_failed(note_id: &str, sentence_index: usize, error: String) -> Self {
        WeakLabelResult {
            note_id: note_id.to_string(),
            sentence_index,
            status: LabelStatus::Failed,
            entities: Vec::new(),
            parsed: 0,
            skipped_objects: 0,
            dropped_unrecovered: 0,
            dropped_bad_type: 0,
            raw_text: String::new(),
            error: Some(error),
        }
    }
}

/// All four steps for one sentence.
///
/// `empty` means no objects and a payload that is an empty list; `failed`
/// means no objects and a payload that is neither blank nor an empty list.
pub fn distill_sentence(
    note_id: &str,
    sentence: &Sentence,
    raw: &str,
    schema: &TaskSchema,
) -> WeakLabelResult {
    let payload = extract_generated(raw);
    let (parsed, skipped) = extract_json_objects_counted(payload);
    let (recovered, dropped_unrecovered) = recover_spans(&sentence.text, &parsed);
    let (kept, dropped_bad_type) = filter_types(recovered, schema);
    let status = if !parsed.is_empty() {
        LabelStatus::Ok
    } else if is_empty_list(payload) {
        LabelStatus::Empty
    } else if payload.trim().is_empty() {
        LabelStatus::Ok
    } else {
        LabelStatus::Failed
    };
    let delta = sentence.start as isize;
    WeakLabelResult {
        note_id: note_id.to_string(),
        sentence_index: sentence.index,
        status,
        entities: kept.iter().map(|e| e.shifted(delta)).collect(),
        parsed: parsed.len(),
        skipped_objects: skipped,
        dropped_unrecovered,
        dropped_bad_type,
        raw_text: raw.to_string(),
        error: None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub template_digest: String,
    pub max_new_tokens: usize,
    pub top_k: usize,
}

#[derive(Debug, Error)]
pub enum WeakSetError {
    #[error("duplicate result for note {note_id} sentence {sentence_index}")]
    Duplicate { note_id: String, sentence_index: usize },
    #[error("weak labels missing for notes: {}", .0.join(", "))]
    MissingNotes(Vec<String>),
    #[error("results for notes outside the weak split: {}", .0.join(", "))]
    ExtraNotes(Vec<String>),
    #[error("weak label line {line}: {message}")]
    Json { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakLabelSet {
    pub results: Vec<WeakLabelResult>,
    pub provenance: Provenance,
}

impl WeakLabelSet {
    /// Sort results by `(note_id, sentence_index)` and reject duplicates.
    pub fn new(mut results: Vec<WeakLabelResult>, provenance: Provenance) -> Result<Self, WeakSetError> {
        results.sort_by(|a, b| {
            (a.note_id.as_str(), a.sentence_index).cmp(&(b.note_id.as_str(), b.sentence_index))
        });
        for w in results.windows(2) {
            if w[0].note_id == w[1].note_id && w[0].sentence_index == w[1].sentence_index {
                return Err(WeakSetError::Duplicate {
                    note_id: w[0].note_id.clone(),
                    sentence_index: w[0].sentence_index,
                });
            }
        }
        Ok(WeakLabelSet { results, provenance })
    }

    /// Check that results exist for every id in `weak_ids` and no others.
    pub fn check_coverage(&self, weak_ids: &[String]) -> Result<(), WeakSetError> {
        let have: BTreeSet<&str> = self.results.iter().map(|r| r.note_id.as_str()).collect();
        let want: BTreeSet<&str> = weak_ids.iter().map(String::as_str).collect();
        let missing: Vec<String> = want.difference(&have).map(|s| s.to_string()).collect();
        if !missing.is_empty() {
            return Err(WeakSetError::MissingNotes(missing));
        }
        let extra: Vec<String> = have.difference(&want).map(|s| s.to_string()).collect();
        if !extra.is_empty() {
            return Err(WeakSetError::ExtraNotes(extra));
        }
        Ok(())
    }

    pub fn for_note<'a>(&'a self, note_id: &'a str) -> impl Iterator<Item = &'a WeakLabelResult> + 'a {
        self.results.iter().filter(move |r| r.note_id == note_id)
    }

    pub fn count(&self, status: LabelStatus) -> usize {
        self.results.iter().filter(|r| r.status == status).count()
    }

    pub fn failed_pct(&self) -> f64 {
        if self.results.is_empty() {
            0.0
        } else {
            100.0 * self.count(LabelStatus::Failed) as f64 / self.results.len() as f64
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            out.push_str(&serde_json::to_string(r).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(doc: &str, provenance: Provenance) -> Result<Self, WeakSetError> {
        let mut results = Vec::new();
        for (i, line) in doc.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            results.push(serde_json::from_str(line).map_err(|e| WeakSetError::Json {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        WeakLabelSet::new(results, provenance)
    }
}
