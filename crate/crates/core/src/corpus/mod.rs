//! Annotated document model, standoff ingestion, sentence segmentation and
//! corpus statistics.

mod jsonl;
mod schema;
mod segment;
mod standoff;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::CharIndex;

pub use jsonl::{read_corpus_jsonl, write_corpus_jsonl, NoteRecord};
pub use schema::{Benchmark, TaskSchema, SYSTEM_PROMPT};
pub use segment::segment_text;
pub use standoff::{parse_standoff, write_standoff};
pub use stats::{corpus_stats, quantile, EntityStats, Summary};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("annotation line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("note {note_id}: {message}")]
    Invalid { note_id: String, message: String },
    #[error("unknown entity types: {}", .0.join(", "))]
    UnknownTypes(Vec<String>),
    #[error("unpaired file {0}")]
    Unpaired(PathBuf),
    #[error("schema: {0}")]
    Schema(String),
    #[error("corpus is empty")]
    Empty,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json line {line}: {message}")]
    Json { line: usize, message: String },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Gold,
    Weak,
}

/// A typed span. Offsets are char offsets, `end` exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    pub text: String,
    #[serde(rename = "type")]
    pub entity_type: String,
    pub source: LabelSource,
}

impl Entity {
    pub fn new(
        start: usize,
        end: usize,
        text: impl Into<String>,
        entity_type: impl Into<String>,
        source: LabelSource,
    ) -> Self {
        Entity {
            start,
            end,
            text: text.into(),
            entity_type: entity_type.into(),
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Entity) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Same entity shifted by `delta` chars (sentence-relative to note-level).
    pub fn shifted(&self, delta: isize) -> Entity {
        Entity {
            start: (self.start as isize + delta) as usize,
            end: (self.end as isize + delta) as usize,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Sentence {
    pub fn contains(&self, e: &Entity) -> bool {
        self.start <= e.start && e.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Note {
    pub note_id: String,
    pub text: String,
    pub sentences: Vec<Sentence>,
    pub gold_entities: Vec<Entity>,
}

impl Note {
    /// Build a note, sorting entities and checking every span against the text.
    pub fn new(
        note_id: impl Into<String>,
        text: impl Into<String>,
        mut gold_entities: Vec<Entity>,
    ) -> Result<Self, CorpusError> {
        let note_id = note_id.into();
        let text = text.into();
        gold_entities.sort_by_key(|e| (e.start, e.end));
        let note = Note {
            note_id,
            text,
            sentences: Vec::new(),
            gold_entities,
        };
        note.validate()?;
        Ok(note)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let idx = CharIndex::new(&self.text);
        for e in &self.gold_entities {
            let invalid = |message: String| CorpusError::Invalid {
                note_id: self.note_id.clone(),
                message,
            };
            if e.start >= e.end {
                return Err(invalid(format!("empty span [{}, {})", e.start, e.end)));
            }
            match idx.slice(e.start, e.end) {
                None => {
                    return Err(invalid(format!(
                        "span [{}, {}) outside text of length {}",
                        e.start,
                        e.end,
                        idx.len()
                    )))
                }
                Some(s) if s != e.text => {
                    return Err(invalid(format!(
                        "span [{}, {}) reads {s:?}, entity says {:?}",
                        e.start, e.end, e.text
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Populate `sentences` with the rule-based segmenter.
    pub fn segmented(mut self) -> Self {
        self.sentences = segment_text(&self.text);
        self
    }

    /// Gold entities lying wholly inside `sentence`, in gold order.
    pub fn entities_in(&self, sentence: &Sentence) -> Vec<&Entity> {
        self.gold_entities
            .iter()
            .filter(|e| sentence.contains(e))
            .collect()
    }

    /// Gold entities not contained in any single sentence.
    pub fn boundary_crossing(&self) -> Vec<&Entity> {
        self.gold_entities
            .iter()
            .filter(|e| !self.sentences.iter().any(|s| s.contains(e)))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub notes: Vec<Note>,
}

impl Corpus {
    pub fn new(mut notes: Vec<Note>) -> Self {
        notes.sort_by(|a, b| a.note_id.cmp(&b.note_id));
        Corpus { notes }
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn get(&self, note_id: &str) -> Option<&Note> {
        self.notes.iter().find(|n| n.note_id == note_id)
    }

    pub fn segmented(self) -> Self {
        Corpus {
            notes: self.notes.into_iter().map(Note::segmented).collect(),
        }
    }

    /// Notes whose ids are in `ids`, keeping corpus order.
    pub fn subset(&self, ids: &[String]) -> Corpus {
        let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        Corpus {
            notes: self
                .notes
                .iter()
                .filter(|n| wanted.contains(n.note_id.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn sentence_count(&self) -> usize {
        self.notes.iter().map(|n| n.sentences.len()).sum()
    }

    pub fn boundary_crossing_count(&self) -> usize {
        self.notes.iter().map(|n| n.boundary_crossing().len()).sum()
    }

    pub fn check_types(&self, schema: &TaskSchema) -> Result<(), CorpusError> {
        let unknown: BTreeSet<&str> = self
            .notes
            .iter()
            .flat_map(|n| &n.gold_entities)
            .map(|e| e.entity_type.as_str())
            .filter(|t| !schema.contains(t))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CorpusError::UnknownTypes(
                unknown.into_iter().map(String::from).collect(),
            ))
        }
    }
}

/// Load paired `<id>.txt` / `<id>.ann` files from `dir`. Other files are ignored.
pub fn load_corpus(dir: &Path, schema: &TaskSchema) -> Result<Corpus, CorpusError> {
    let mut pairs: BTreeMap<String, (Option<PathBuf>, Option<PathBuf>)> = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| CorpusError::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let slot = pairs.entry(stem.to_string()).or_default();
        match ext {
            "txt" => slot.0 = Some(path.clone()),
            "ann" => slot.1 = Some(path.clone()),
            _ => {}
        }
    }

    let mut notes = Vec::new();
    for (id, pair) in pairs {
        let (txt, ann) = match pair {
            (Some(t), Some(a)) => (t, a),
            (Some(t), None) => return Err(CorpusError::Unpaired(t)),
            (None, Some(a)) => return Err(CorpusError::Unpaired(a)),
            (None, None) => continue,
        };
        let text = fs::read_to_string(&txt).map_err(|e| CorpusError::io(&txt, e))?;
        let ann_doc = fs::read_to_string(&ann).map_err(|e| CorpusError::io(&ann, e))?;
        let note = parse_standoff(&id, &text, &ann_doc).map_err(|e| match e {
            CorpusError::Parse { line, message } => CorpusError::Invalid {
                note_id: id.clone(),
                message: format!("{}: line {line}: {message}", ann.display()),
            },
            other => other,
        })?;
        notes.push(note.segmented());
    }
    let corpus = Corpus::new(notes);
    corpus.check_types(schema)?;
    Ok(corpus)
}
