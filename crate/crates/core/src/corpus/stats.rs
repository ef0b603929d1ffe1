//! Entity-count statistics in the layout of a corpus summary table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};
use crate::distill::{LabelStatus, WeakLabelSet};

/// Linear interpolation between order statistics of an ascending slice
/// (`h = (n - 1) * p`). Panics on an empty slice.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single value.
    pub sd: f64,
}

impl Summary {
    pub fn of_counts(counts: &[usize]) -> Option<Summary> {
        if counts.is_empty() {
            return None;
        }
        let mut v: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Summary {
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
            mean,
            sd,
        })
    }

    fn zero() -> Summary {
        Summary {
            median: 0.0,
            q1: 0.0,
            q3: 0.0,
            mean: 0.0,
            sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityStats {
    pub note_count: usize,
    pub sentence_count: usize,
    pub total_entities: usize,
    pub per_sentence: Summary,
    pub per_note: Summary,
    /// Only meaningful for weak label sets.
    pub failed_sentence_pct: Option<f64>,
    /// Gold entities spanning a sentence boundary (gold statistics only).
    pub boundary_crossing: usize,
}

fn fmt_num(x: f64) -> String {
    let r = (x * 100.0).round() / 100.0;
    if r.fract() == 0.0 {
        format!("{}", r as i64)
    } else {
        format!("{r}")
    }
}

impl EntityStats {
    /// Rows labelled like the weak-label summary table.
    pub fn table_rows(&self) -> Vec<(String, String)> {
        let mut rows = Vec::new();
        if let Some(pct) = self.failed_sentence_pct {
            rows.push((
                "Post-processing failed, sentences (%)".to_string(),
                fmt_num(pct),
            ));
        }
        rows.extend([
            ("Notes".to_string(), self.note_count.to_string()),
            ("Sentences".to_string(), self.sentence_count.to_string()),
            ("Total entities".to_string(), self.total_entities.to_string()),
            (
                "Entities per sentence, median [Q1, Q3]".to_string(),
                format!(
                    "{} [{}, {}]",
                    fmt_num(self.per_sentence.median),
                    fmt_num(self.per_sentence.q1),
                    fmt_num(self.per_sentence.q3)
                ),
            ),
            (
                "Entities per sentence, mean (Std Dev)".to_string(),
                format!(
                    "{} ({})",
                    fmt_num(self.per_sentence.mean),
                    fmt_num(self.per_sentence.sd)
                ),
            ),
            (
                "Entities per note, median [Q1, Q3]".to_string(),
                format!(
                    "{} [{}, {}]",
                    fmt_num(self.per_note.median),
                    fmt_num(self.per_note.q1),
                    fmt_num(self.per_note.q3)
                ),
            ),
        ]);
        rows
    }

    /// CSV with one `feature,value,data_source` row per table row.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "value", "data_source"]).unwrap();
        for (k, v) in self.table_rows() {
            w.write_record([k.as_str(), v.as_str(), crate::DATA_LABEL])
                .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Gold statistics, or weak-label statistics when `weak` is given.
///
/// For weak sets, failed sentences are excluded from the per-sentence
/// distribution but counted in `sentence_count` and the failure percentage.
pub fn corpus_stats(corpus: &Corpus, weak: Option<&WeakLabelSet>) -> Result<EntityStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    match weak {
        None => {
            let per_note: Vec<usize> = corpus.notes.iter().map(|n| n.gold_entities.len()).collect();
            let per_sentence: Vec<usize> = corpus
                .notes
                .iter()
                .flat_map(|n| n.sentences.iter().map(move |s| n.entities_in(s).len()))
                .collect();
            Ok(EntityStats {
                note_count: corpus.len(),
                sentence_count: per_sentence.len(),
                total_entities: per_note.iter().sum(),
                per_sentence: Summary::of_counts(&per_sentence).unwrap_or_else(Summary::zero),
                per_note: Summary::of_counts(&per_note).unwrap(),
                failed_sentence_pct: None,
                boundary_crossing: corpus.boundary_crossing_count(),
            })
        }
        Some(set) => {
            if set.results.is_empty() {
                return Err(CorpusError::Empty);
            }
            let mut per_note: BTreeMap<&str, usize> = BTreeMap::new();
            let mut per_sentence = Vec::new();
            let mut failed = 0usize;
            for r in &set.results {
                *per_note.entry(r.note_id.as_str()).or_default() += r.entities.len();
                if r.status == LabelStatus::Failed {
                    failed += 1;
                } else {
                    per_sentence.push(r.entities.len());
                }
            }
            let note_counts: Vec<usize> = per_note.values().copied().collect();
            Ok(EntityStats {
                note_count: note_counts.len(),
                sentence_count: set.results.len(),
                total_entities: note_counts.iter().sum(),
                per_sentence: Summary::of_counts(&per_sentence).unwrap_or_else(Summary::zero),
                per_note: Summary::of_counts(&note_counts).unwrap(),
                failed_sentence_pct: Some(100.0 * failed as f64 / set.results.len() as f64),
                boundary_crossing: 0,
            })
        }
    }
}
