//! BIO tagging of subword tokens and the CoNLL-style file format.
//!
//! File layout: `-DOCSTART- <note_id>` opens each note, each token is a
//! `piece<TAB>start<TAB>end<TAB>tag` line with sentence-relative char
//! offsets, and a blank line closes each sentence.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::wordpiece::SubwordToken;
use super::ExportError;
use crate::corpus::{Entity, LabelSource, Note};
use crate::text::CharIndex;

pub const DOCSTART: &str = "-DOCSTART-";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn entity_type(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "O" => Ok(Tag::Outside),
            _ => match (s.strip_prefix("B-"), s.strip_prefix("I-")) {
                (Some(t), _) if !t.is_empty() => Ok(Tag::Begin(t.to_string())),
                (_, Some(t)) if !t.is_empty() => Ok(Tag::Inside(t.to_string())),
                _ => Err(format!("invalid tag {s:?}")),
            },
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// No `I-X` may follow `O`, the sequence start, or a tag of another type.
pub fn is_well_formed(tags: &[Tag]) -> bool {
    let mut prev: Option<&str> = None;
    for tag in tags {
        match tag {
            Tag::Outside => prev = None,
            Tag::Begin(t) => prev = Some(t),
            Tag::Inside(t) => {
                if prev != Some(t.as_str()) {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BioExample {
    pub note_id: String,
    pub sentence_index: usize,
    pub tokens: Vec<SubwordToken>,
    pub tags: Vec<Tag>,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    /// Lost to overlap resolution or to a token already claimed.
    pub overlap: usize,
    /// Reaching past the token limit.
    pub truncated: usize,
    /// Touching no token at all.
    pub unaligned: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.overlap + self.truncated + self.unaligned
    }

    pub fn add(&mut self, other: DropCounts) {
        self.overlap += other.overlap;
        self.truncated += other.truncated;
        self.unaligned += other.unaligned;
    }
}

/// Keep a non-overlapping subset: sort by (start, longer first), then take
/// each entity that does not overlap one already kept.
pub fn resolve_overlaps(entities: &[Entity]) -> (Vec<Entity>, usize) {
    let mut sorted = entities.to_vec();
    sorted.sort_by(|a, b| {
        a.start
            .cmp(&b.start)
            .then(b.len().cmp(&a.len()))
            .then_with(|| a.entity_type.cmp(&b.entity_type))
    });
    let mut kept: Vec<Entity> = Vec::with_capacity(sorted.len());
    let mut dropped = 0;
    for e in sorted {
        if kept.last().is_some_and(|k| e.start < k.end) {
            dropped += 1;
        } else {
            kept.push(e);
        }
    }
    (kept, dropped)
}

/// Tag `tokens` from sentence-relative `entities`. A token belongs to an
/// entity when their spans intersect; the first such token gets `B-`.
pub fn to_bio(
    note_id: &str,
    sentence_index: usize,
    tokens: &[SubwordToken],
    entities: &[Entity],
    max_tokens: usize,
) -> (BioExample, DropCounts) {
    let (kept, overlap) = resolve_overlaps(entities);
    let mut drops = DropCounts {
        overlap,
        ..DropCounts::default()
    };
    let truncated = tokens.len() > max_tokens;
    let visible = &tokens[..tokens.len().min(max_tokens)];
    let hidden = &tokens[visible.len()..];
    let mut tags = vec![Tag::Outside; visible.len()];

    for e in &kept {
        let hits = |t: &SubwordToken| t.start < e.end && e.start < t.end;
        if hidden.iter().any(hits) {
            drops.truncated += 1;
            continue;
        }
        let idx: Vec<usize> = (0..visible.len()).filter(|&i| hits(&visible[i])).collect();
        if idx.is_empty() {
            drops.unaligned += 1;
            continue;
        }
        if idx.iter().any(|&i| tags[i] != Tag::Outside) {
            drops.overlap += 1;
            continue;
        }
        for (n, &i) in idx.iter().enumerate() {
            tags[i] = if n == 0 {
                Tag::Begin(e.entity_type.clone())
            } else {
                Tag::Inside(e.entity_type.clone())
            };
        }
    }

    (
        BioExample {
            note_id: note_id.to_string(),
            sentence_index,
            tokens: visible.to_vec(),
            tags,
            truncated,
        },
        drops,
    )
}

/// Decode maximal `B/I` runs into sentence-relative entities. An `I-X` that
/// cannot continue a run starts a new one.
pub fn from_bio(example: &BioExample, sentence_text: &str, source: LabelSource) -> Vec<Entity> {
    let idx = CharIndex::new(sentence_text);
    let mut spans: Vec<(usize, usize, String)> = Vec::new();
    let mut open = false;
    for (tok, tag) in example.tokens.iter().zip(&example.tags) {
        match tag {
            Tag::Outside => open = false,
            Tag::Begin(t) => {
                spans.push((tok.start, tok.end, t.clone()));
                open = true;
            }
            Tag::Inside(t) => match spans.last_mut() {
                Some(last) if open && last.2 == *t => last.1 = tok.end,
                _ => {
                    spans.push((tok.start, tok.end, t.clone()));
                    open = true;
                }
            },
        }
    }
    spans
        .into_iter()
        .filter_map(|(s, e, t)| {
            idx.slice(s, e)
                .map(|text| Entity::new(s, e, text, t, source))
        })
        .collect()
}

/// Append one note's examples to `out`.
pub fn write_bio_note(out: &mut String, note_id: &str, examples: &[BioExample]) {
    out.push_str(&format!("{DOCSTART} {note_id}\n\n"));
    for ex in examples {
        for (tok, tag) in ex.tokens.iter().zip(&ex.tags) {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", tok.text, tok.start, tok.end, tag));
        }
        out.push('\n');
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioToken {
    pub piece: String,
    pub start: usize,
    pub end: usize,
    pub tag: Tag,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioDocument {
    pub note_id: String,
    pub sentences: Vec<Vec<BioToken>>,
}

pub fn parse_bio(doc: &str) -> Result<Vec<BioDocument>, ExportError> {
    let mut docs: Vec<BioDocument> = Vec::new();
    let mut current: Vec<BioToken> = Vec::new();
    for (i, raw) in doc.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let err = |message: String| ExportError::BioParse { line: i + 1, message };
        if let Some(rest) = line.strip_prefix(DOCSTART) {
            if let Some(d) = docs.last_mut() {
                if !current.is_empty() {
                    d.sentences.push(std::mem::take(&mut current));
                }
            }
            let id = rest.trim();
            if id.is_empty() {
                return Err(err("document marker without note id".into()));
            }
            docs.push(BioDocument {
                note_id: id.to_string(),
                sentences: Vec::new(),
            });
            continue;
        }
        if line.trim().is_empty() {
            if !current.is_empty() {
                let d = docs.last_mut().ok_or_else(|| err("tokens before first document marker".into()))?;
                d.sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if docs.is_empty() {
            return Err(err("tokens before first document marker".into()));
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [piece, start, end, tag] = f[..] else {
            return Err(err(format!("expected 4 tab-separated fields, got {}", f.len())));
        };
        let start: usize = start.parse().map_err(|_| err(format!("bad start {start:?}")))?;
        let end: usize = end.parse().map_err(|_| err(format!("bad end {end:?}")))?;
        if start >= end {
            return Err(err(format!("empty token span [{start}, {end})")));
        }
        if piece.is_empty() {
            return Err(err("empty piece".into()));
        }
        let tag: Tag = tag.parse().map_err(err)?;
        current.push(BioToken {
            piece: piece.to_string(),
            start,
            end,
            tag,
        });
    }
    if !current.is_empty() {
        docs.last_mut().expect("tokens imply a document").sentences.push(current);
    }
    Ok(docs)
}

fn block_fits(block: &[BioToken], sentence: &CharIndex<'_>) -> bool {
    block.iter().all(|t| match sentence.slice(t.start, t.end) {
        None => false,
        Some(span) => {
            t.piece == super::wordpiece::UNK
                || t.piece.strip_prefix(super::wordpiece::CONTINUATION).unwrap_or(&t.piece) == span
        }
    })
}

/// Map a parsed document onto `note`, matching each sentence block to the
/// next note sentence whose text agrees with the block's pieces (blocks may
/// skip sentences), and return note-level entities.
pub fn align_document(doc: &BioDocument, note: &Note, source: LabelSource) -> Result<Vec<Entity>, ExportError> {
    let indexes: Vec<CharIndex<'_>> = note.sentences.iter().map(|s| CharIndex::new(&s.text)).collect();
    let mut cursor = 0;
    let mut out = Vec::new();
    for (b, block) in doc.sentences.iter().enumerate() {
        let found = (cursor..note.sentences.len()).find(|&i| block_fits(block, &indexes[i]));
        let Some(i) = found else {
            return Err(ExportError::Alignment {
                note_id: doc.note_id.clone(),
                block: b,
            });
        };
        let s = &note.sentences[i];
        let example = BioExample {
            note_id: doc.note_id.clone(),
            sentence_index: i,
            tokens: block
                .iter()
                .map(|t| SubwordToken {
                    text: t.piece.clone(),
                    start: t.start,
                    end: t.end,
                    is_continuation: t.piece.starts_with(super::wordpiece::CONTINUATION),
                })
                .collect(),
            tags: block.iter().map(|t| t.tag.clone()).collect(),
            truncated: false,
        };
        out.extend(
            from_bio(&example, &s.text, source)
                .into_iter()
                .map(|e| e.shifted(s.start as isize)),
        );
        cursor = i + 1;
    }
    Ok(out)
}
