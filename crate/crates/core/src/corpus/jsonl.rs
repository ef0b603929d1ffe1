//! Canonical JSON-Lines interchange: one note per line.

use serde::{Deserialize, Serialize};

use super::{CorpusError, Entity, Note, Sentence};
use crate::text::CharIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub start: usize,
    pub end: usize,
}

/// Wire form of a note. `text` is optional so prediction files may omit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub note_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default)]
    pub sentences: Vec<SpanRecord>,
    #[serde(default)]
    pub entities: Vec<Entity>,
}

impl NoteRecord {
    pub fn from_note(note: &Note) -> Self {
        NoteRecord {
            note_id: note.note_id.clone(),
            text: Some(note.text.clone()),
            sentences: note
                .sentences
                .iter()
                .map(|s| SpanRecord {
                    start: s.start,
                    end: s.end,
                })
                .collect(),
            entities: note.gold_entities.clone(),
        }
    }

    pub fn into_note(self) -> Result<Note, CorpusError> {
        let text = self.text.ok_or_else(|| CorpusError::Invalid {
            note_id: self.note_id.clone(),
            message: "record has no text".into(),
        })?;
        let mut note = Note::new(self.note_id, text, self.entities)?;
        let idx = CharIndex::new(&note.text);
        let mut sentences = Vec::with_capacity(self.sentences.len());
        for (i, span) in self.sentences.iter().enumerate() {
            let body = idx.slice(span.start, span.end).ok_or_else(|| CorpusError::Invalid {
                note_id: note.note_id.clone(),
                message: format!("sentence {i} span out of bounds"),
            })?;
            sentences.push(Sentence {
                index: i,
                start: span.start,
                end: span.end,
                text: body.to_string(),
            });
        }
        note.sentences = sentences;
        Ok(note)
    }
}

pub fn write_corpus_jsonl(notes: &[Note]) -> String {
    let mut out = String::new();
    for n in notes {
        out.push_str(&serde_json::to_string(&NoteRecord::from_note(n)).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn read_corpus_jsonl(doc: &str) -> Result<Vec<Note>, CorpusError> {
    let mut notes = Vec::new();
    for (i, line) in doc.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: NoteRecord = serde_json::from_str(line).map_err(|e| CorpusError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        notes.push(rec.into_note()?);
    }
    Ok(notes)
}
