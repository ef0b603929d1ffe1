//! Entity-level strict and lenient micro precision, recall and F1.
//!
//! Strict matching pairs entities with identical `(start, end, type)`.
//! Lenient matching pairs entities of the same type whose spans share at
//! least one character, one-to-one, with maximum cardinality.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Entity, LabelSource, Note};
use crate::export::{align_document, parse_bio, ExportError, DOCSTART};
use crate::text::CharIndex;
use crate::DATA_LABEL;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction for unknown note {0}")]
    UnknownNote(String),
    #[error("prediction line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Bio(#[from] ExportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Strict,
    Lenient,
}

impl MatchMode {
    pub const BOTH: [MatchMode; 2] = [MatchMode::Strict, MatchMode::Lenient];
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Strict => "strict",
            MatchMode::Lenient => "lenient",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn scores(&self) -> Scores {
        Scores::from_counts(*self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    pub fn from_counts(c: Counts) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Scores { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub counts: Counts,
    /// `(gold index, pred index)` pairs.
    pub pairs: Vec<(usize, usize)>,
}

fn overlap(a: &Entity, b: &Entity) -> usize {
    a.end.min(b.end).saturating_sub(a.start.max(b.start))
}

fn compatible(mode: MatchMode, g: &Entity, p: &Entity) -> bool {
    g.entity_type == p.entity_type
        && match mode {
            MatchMode::Strict => g.start == p.start && g.end == p.end,
            MatchMode::Lenient => overlap(g, p) > 0,
        }
}

/// Try to route gold `g` to some pred, displacing earlier assignments along
/// an alternating path.
fn augment(
    g: usize,
    adj: &[Vec<usize>],
    pred_owner: &mut [Option<usize>],
    seen: &mut [bool],
) -> bool {
    for &p in &adj[g] {
        if seen[p] {
            continue;
        }
        seen[p] = true;
        if pred_owner[p].is_none_or(|h| augment(h, adj, pred_owner, seen)) {
            pred_owner[p] = Some(g);
            return true;
        }
    }
    false
}

/// One-to-one matching between the entities of a single note.
///
/// Gold entities are visited in `(start, end)` order and each takes the free
/// compatible prediction with the largest overlap, then the earliest start.
/// Golds left unmatched then try augmenting paths, so the final pairing has
/// maximum cardinality even where the greedy pass would not.
pub fn match_entities(gold: &[Entity], pred: &[Entity], mode: MatchMode) -> MatchResult {
    let mut order: Vec<usize> = (0..gold.len()).collect();
    order.sort_by_key(|&i| (gold[i].start, gold[i].end, i));

    let adj: Vec<Vec<usize>> = gold
        .iter()
        .map(|g| {
            let mut c: Vec<usize> = (0..pred.len()).filter(|&j| compatible(mode, g, &pred[j])).collect();
            c.sort_by_key(|&j| (std::cmp::Reverse(overlap(g, &pred[j])), pred[j].start, pred[j].end, j));
            c
        })
        .collect();

    let mut pred_owner: Vec<Option<usize>> = vec![None; pred.len()];
    let mut unmatched = Vec::new();
    for &g in &order {
        match adj[g].iter().find(|&&p| pred_owner[p].is_none()) {
            Some(&p) => pred_owner[p] = Some(g),
            None => unmatched.push(g),
        }
    }
    if mode == MatchMode::Lenient {
        for g in unmatched {
            let mut seen = vec![false; pred.len()];
            augment(g, &adj, &mut pred_owner, &mut seen);
        }
    }

    let mut pairs: Vec<(usize, usize)> = pred_owner
        .iter()
        .enumerate()
        .filter_map(|(p, g)| g.map(|g| (g, p)))
        .collect();
    pairs.sort_unstable();
    let tp = pairs.len();
    MatchResult {
        counts: Counts {
            tp,
            fp: pred.len() - tp,
            fn_: gold.len() - tp,
        },
        pairs,
    }
}

/// Predicted entities keyed by note id.
pub type PredictionSet = BTreeMap<String, Vec<Entity>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    #[serde(flatten)]
    pub counts: Counts,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: MatchMode,
    pub per_type: BTreeMap<String, TypeRow>,
    pub counts: Counts,
    pub micro: Scores,
    pub per_note: BTreeMap<String, Counts>,
}

/// Pool counts over all corpus notes, then score. Notes without predictions
/// count as predicting nothing.
pub fn micro_scores(gold: &Corpus, pred: &PredictionSet, mode: MatchMode) -> Result<EvalReport, EvalError> {
    if let Some(unknown) = pred.keys().find(|id| gold.get(id).is_none()) {
        return Err(EvalError::UnknownNote(unknown.clone()));
    }
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    let mut per_note = BTreeMap::new();
    let mut total = Counts::default();
    for note in &gold.notes {
        let g = &note.gold_entities;
        let p: &[Entity] = pred.get(&note.note_id).map(Vec::as_slice).unwrap_or(&[]);
        let m = match_entities(g, p, mode);
        let gold_hit: BTreeSet<usize> = m.pairs.iter().map(|&(a, _)| a).collect();
        let pred_hit: BTreeSet<usize> = m.pairs.iter().map(|&(_, b)| b).collect();
        for (i, e) in g.iter().enumerate() {
            let c = per_type.entry(e.entity_type.clone()).or_default();
            if gold_hit.contains(&i) {
                c.tp += 1;
            } else {
                c.fn_ += 1;
            }
        }
        for (j, e) in p.iter().enumerate() {
            if !pred_hit.contains(&j) {
                per_type.entry(e.entity_type.clone()).or_default().fp += 1;
            }
        }
        total.add(m.counts);
        per_note.insert(note.note_id.clone(), m.counts);
    }
    Ok(EvalReport {
        mode,
        per_type: per_type
            .into_iter()
            .map(|(t, counts)| (t, TypeRow { counts, scores: counts.scores() }))
            .collect(),
        counts: total,
        micro: total.scores(),
        per_note,
    })
}

/// Both modes side by side, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub data_label: String,
    pub lenient_rule: String,
    pub reports: Vec<EvalReport>,
}

impl EvalSummary {
    pub fn evaluate(gold: &Corpus, pred: &PredictionSet) -> Result<Self, EvalError> {
        Ok(EvalSummary {
            data_label: DATA_LABEL.to_string(),
            lenient_rule: "same type and at least one shared character".to_string(),
            reports: MatchMode::BOTH
                .iter()
                .map(|&m| micro_scores(gold, pred, m))
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn report(&self, mode: MatchMode) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.mode == mode)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["mode", "type", "tp", "fp", "fn", "precision", "recall", "f1"])
            .expect("in-memory write");
        let mut row = |mode: MatchMode, name: &str, c: &Counts, s: &Scores| {
            w.write_record([
                mode.to_string(),
                name.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                format!("{:.4}", s.precision),
                format!("{:.4}", s.recall),
                format!("{:.4}", s.f1),
            ])
            .expect("in-memory write");
        };
        for r in &self.reports {
            for (t, tr) in &r.per_type {
                row(r.mode, t, &tr.counts, &tr.scores);
            }
            row(r.mode, "micro", &r.counts, &r.micro);
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

#[derive(Debug, Deserialize)]
struct PredEntity {
    start: usize,
    end: usize,
    #[serde(default)]
    text: Option<String>,
    #[serde(rename = "type")]
    entity_type: String,
}

#[derive(Debug, Deserialize)]
struct PredRecord {
    note_id: String,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    entities: Vec<PredEntity>,
}

fn check_entity(note_text: &str, e: PredEntity, line: usize) -> Result<Entity, EvalError> {
    let err = |message: String| EvalError::Line { line, message };
    if e.start >= e.end {
        return Err(err(format!("empty span [{}, {})", e.start, e.end)));
    }
    let surface = CharIndex::new(note_text)
        .slice(e.start, e.end)
        .ok_or_else(|| err(format!("span [{}, {}) outside note text", e.start, e.end)))?;
    if let Some(t) = &e.text {
        if t != surface {
            return Err(err(format!("entity text {t:?} differs from note text {surface:?}")));
        }
    }
    Ok(Entity::new(e.start, e.end, surface, e.entity_type, LabelSource::Weak))
}

fn load_jsonl(doc: &str, corpus: &Corpus) -> Result<PredictionSet, EvalError> {
    let mut out = PredictionSet::new();
    for (i, raw) in doc.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: PredRecord = serde_json::from_str(raw).map_err(|e| EvalError::Line {
            line,
            message: e.to_string(),
        })?;
        let note: Option<&Note> = corpus.get(&rec.note_id);
        let text = match (&rec.text, note) {
            (Some(t), _) => t.as_str(),
            (None, Some(n)) => n.text.as_str(),
            (None, None) => return Err(EvalError::UnknownNote(rec.note_id)),
        };
        let ents = rec
            .entities
            .into_iter()
            .map(|e| check_entity(text, e, line))
            .collect::<Result<Vec<_>, _>>()?;
        if out.insert(rec.note_id.clone(), ents).is_some() {
            return Err(EvalError::Line {
                line,
                message: format!("duplicate note {}", rec.note_id),
            });
        }
    }
    Ok(out)
}

fn load_bio(doc: &str, corpus: &Corpus) -> Result<PredictionSet, EvalError> {
    let mut out = PredictionSet::new();
    for d in parse_bio(doc)? {
        let note = corpus
            .get(&d.note_id)
            .ok_or_else(|| EvalError::UnknownNote(d.note_id.clone()))?;
        let ents = align_document(&d, note, LabelSource::Weak)?;
        out.entry(d.note_id).or_default().extend(ents);
    }
    Ok(out)
}

/// Read predictions as JSON-Lines records or as a BIO file, detected by
/// whether the first non-blank line is a document marker. BIO input is
/// decoded against the corpus sentences.
pub fn load_predictions(doc: &str, corpus: &Corpus) -> Result<PredictionSet, EvalError> {
    let first = doc.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if first.starts_with(DOCSTART) {
        load_bio(doc, corpus)
    } else {
        load_jsonl(doc, corpus)
    }
}

/// Serialize predictions in the JSON-Lines form read by [`load_predictions`].
pub fn write_predictions(pred: &PredictionSet) -> String {
    let mut out = String::new();
    for (id, ents) in pred {
        let rec = serde_json::json!({
            "note_id": id,
            "entities": ents.iter().map(|e| serde_json::json!({
                "start": e.start, "end": e.end, "text": e.text, "type": e.entity_type,
            })).collect::<Vec<_>>(),
        });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: usize, t: usize, ty: &str) -> Entity {
        Entity::new(s, t, "", ty, LabelSource::Gold)
    }

    #[test]
    fn exact_match_both_modes() {
        for m in MatchMode::BOTH {
            let r = match_entities(&[e(41, 46, "Drug")], &[e(41, 46, "Drug")], m);
            assert_eq!(r.counts, Counts { tp: 1, fp: 0, fn_: 0 });
        }
    }

    #[test]
    fn boundary_shift() {
        let g = [e(41, 46, "Drug")];
        let p = [e(40, 46, "Drug")];
        assert_eq!(match_entities(&g, &p, MatchMode::Strict).counts, Counts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(match_entities(&g, &p, MatchMode::Lenient).counts.tp, 1);
        let wrong_type = [e(41, 46, "Form")];
        assert_eq!(match_entities(&g, &wrong_type, MatchMode::Lenient).counts.tp, 0);
    }

    #[test]
    fn half_right() {
        let g = [e(0, 3, "A"), e(10, 12, "A")];
        let p = [e(0, 3, "A"), e(20, 22, "A")];
        let c = match_entities(&g, &p, MatchMode::Strict).counts;
        assert_eq!(c, Counts { tp: 1, fp: 1, fn_: 1 });
        let s = c.scores();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn augmenting_beats_greedy() {
        // greedy gives g0 the larger overlap with p0, stranding g1
        let g = [e(0, 10, "A"), e(8, 12, "A")];
        let p = [e(2, 10, "A"), e(0, 1, "A")];
        assert_eq!(match_entities(&g, &p, MatchMode::Lenient).counts.tp, 2);
    }

    #[test]
    fn duplicates_are_one_to_one() {
        let g = [e(0, 3, "A")];
        let p = [e(0, 3, "A"), e(0, 3, "A")];
        assert_eq!(match_entities(&g, &p, MatchMode::Strict).counts, Counts { tp: 1, fp: 1, fn_: 0 });
    }

    #[test]
    fn zero_denominators() {
        let s = Counts::default().scores();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }
}
