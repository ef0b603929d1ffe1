//! Training data export: subword BIO files for the weak and gold stages
//! plus the manifest that orders them.

mod bio;
mod manifest;
mod wordpiece;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Benchmark, Corpus, Entity, Sentence};
use crate::distill::{LabelStatus, WeakLabelSet};
use crate::select::SubsetSelection;

pub use bio::{
    align_document, from_bio, is_well_formed, parse_bio, resolve_overlaps, to_bio, write_bio_note,
    BioDocument, BioExample, BioToken, DropCounts, Tag, DOCSTART,
};
pub use manifest::{
    catalog_lookup, hyperparameters, split_notes, Hyperparameters, StageKind, StageManifest,
    TrainingManifest, CHECKPOINT_SELECTION, EARLY_STOP_PATIENCE,
};
pub use wordpiece::{tokenize_subwords, SubwordToken, Vocabulary, CONTINUATION, FIXTURE_VOCAB, UNK};

pub const WEAK_FILE: &str = "weak.bio";
pub const GOLD_FILE: &str = "gold.bio";
pub const DEFAULT_MAX_TOKENS: usize = 256;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("BIO line {line}: {message}")]
    BioParse { line: usize, message: String },
    #[error("note {note_id}: sentence block {block} matches no remaining sentence")]
    Alignment { note_id: String, block: usize },
    #[error("weak labels missing for notes: {}", .0.join(", "))]
    MissingWeak(Vec<String>),
    #[error("note {0} is not in the corpus")]
    UnknownNote(String),
    #[error("note {note_id}: weak result for sentence {sentence_index} which does not exist")]
    UnknownSentence { note_id: String, sentence_index: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportOptions {
    pub max_tokens: usize,
    /// Emit sentences whose labeling failed as all-`O` examples.
    pub include_failed: bool,
    pub seed: u64,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            max_tokens: DEFAULT_MAX_TOKENS,
            include_failed: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub notes: usize,
    pub examples: usize,
    pub entities_in: usize,
    pub entities_tagged: usize,
    pub excluded_failed: usize,
    pub truncated_examples: usize,
    pub dropped: DropCounts,
}

#[derive(Debug, Clone)]
pub struct StageExport {
    pub manifest: TrainingManifest,
    pub weak_bio: String,
    pub gold_bio: String,
    pub weak_counts: StageCounts,
    pub gold_counts: StageCounts,
}

fn relative(entities: &[&Entity], start: usize) -> Vec<Entity> {
    entities.iter().map(|e| e.shifted(-(start as isize))).collect()
}

fn emit_example(
    out: &mut Vec<BioExample>,
    counts: &mut StageCounts,
    note_id: &str,
    sentence: &Sentence,
    entities: &[Entity],
    vocab: &Vocabulary,
    max_tokens: usize,
) {
    let tokens = tokenize_subwords(&sentence.text, vocab);
    let (ex, drops) = to_bio(note_id, sentence.index, &tokens, entities, max_tokens);
    counts.entities_in += entities.len();
    counts.entities_tagged += ex.tags.iter().filter(|t| matches!(t, Tag::Begin(_))).count();
    counts.truncated_examples += usize::from(ex.truncated);
    counts.dropped.add(drops);
    counts.examples += 1;
    out.push(ex);
}

fn gold_stage(
    corpus: &Corpus,
    ids: &[String],
    vocab: &Vocabulary,
    opts: &ExportOptions,
) -> Result<(String, StageCounts), ExportError> {
    let mut text = String::new();
    let mut counts = StageCounts::default();
    let mut sorted = ids.to_vec();
    sorted.sort();
    for id in &sorted {
        let note = corpus.get(id).ok_or_else(|| ExportError::UnknownNote(id.clone()))?;
        counts.notes += 1;
        counts.dropped.unaligned += note.boundary_crossing().len();
        let mut examples = Vec::new();
        for s in &note.sentences {
            let ents = relative(&note.entities_in(s), s.start);
            emit_example(&mut examples, &mut counts, id, s, &ents, vocab, opts.max_tokens);
        }
        write_bio_note(&mut text, id, &examples);
    }
    Ok((text, counts))
}

fn weak_stage(
    corpus: &Corpus,
    weak: &WeakLabelSet,
    ids: &[String],
    vocab: &Vocabulary,
    opts: &ExportOptions,
) -> Result<(String, StageCounts), ExportError> {
    let mut by_note: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for r in &weak.results {
        by_note.entry(r.note_id.as_str()).or_default().push(r);
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    let missing: Vec<String> = sorted
        .iter()
        .filter(|id| !by_note.contains_key(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(ExportError::MissingWeak(missing));
    }

    let mut text = String::new();
    let mut counts = StageCounts::default();
    for id in &sorted {
        let note = corpus.get(id).ok_or_else(|| ExportError::UnknownNote(id.clone()))?;
        counts.notes += 1;
        let mut results = by_note[id.as_str()].clone();
        results.sort_by_key(|r| r.sentence_index);
        let mut examples = Vec::new();
        for r in results {
            let s = note.sentences.get(r.sentence_index).ok_or_else(|| ExportError::UnknownSentence {
                note_id: id.clone(),
                sentence_index: r.sentence_index,
            })?;
            let ents: Vec<Entity> = match r.status {
                LabelStatus::Failed if !opts.include_failed => {
                    counts.excluded_failed += 1;
                    continue;
                }
                LabelStatus::Failed => Vec::new(),
                _ => relative(&r.entities.iter().collect::<Vec<_>>(), s.start),
            };
            emit_example(&mut examples, &mut counts, id, s, &ents, vocab, opts.max_tokens);
        }
        write_bio_note(&mut text, id, &examples);
    }
    Ok((text, counts))
}

fn stage_manifest(
    kind: StageKind,
    source: &str,
    ids: &[String],
    examples: usize,
    benchmark: Benchmark,
    n_s: usize,
    seed: u64,
) -> StageManifest {
    let (hp, catalog_match) = hyperparameters(benchmark, n_s, kind);
    let (train_notes, validation_notes) = split_notes(ids, hp.validation_ratio, seed);
    let mut notes = ids.to_vec();
    notes.sort();
    StageManifest {
        name: kind,
        source: source.to_string(),
        notes,
        train_notes,
        validation_notes,
        examples,
        hyperparameters: hp,
        catalog_match,
    }
}

/// Build both stage files and the manifest. Output is ordered by
/// `(note_id, sentence_index)` and depends only on the inputs.
pub fn export_stage_datasets(
    corpus: &Corpus,
    weak: &WeakLabelSet,
    selection: &SubsetSelection,
    benchmark: Benchmark,
    vocab: &Vocabulary,
    opts: &ExportOptions,
) -> Result<StageExport, ExportError> {
    let (weak_bio, weak_counts) = weak_stage(corpus, weak, &selection.weak_ids, vocab, opts)?;
    let (gold_bio, gold_counts) = gold_stage(corpus, &selection.gold_ids, vocab, opts)?;
    let n_s = selection.n_s;
    let manifest = TrainingManifest::new(
        benchmark.id(),
        n_s,
        stage_manifest(StageKind::Weak, WEAK_FILE, &selection.weak_ids, weak_counts.examples, benchmark, n_s, opts.seed),
        stage_manifest(StageKind::Gold, GOLD_FILE, &selection.gold_ids, gold_counts.examples, benchmark, n_s, opts.seed),
    );
    Ok(StageExport {
        manifest,
        weak_bio,
        gold_bio,
        weak_counts,
        gold_counts,
    })
}
