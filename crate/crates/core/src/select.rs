//! Representative gold-subset selection.
//!
//! The `n_s` notes whose gold entity count is closest to the corpus median
//! form the gold subset; the rest are weakly labeled. Ties on the distance
//! break by ascending note id, so the result never depends on input order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{quantile, Corpus};

/// Subset sizes used by the benchmark experiments.
pub const PRESET_SIZES: [usize; 4] = [3, 5, 10, 50];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SelectError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("subset size must be at least 1")]
    ZeroSubset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSelection {
    pub n_s: usize,
    pub median: f64,
    pub gold_ids: Vec<String>,
    pub weak_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SubsetSelection {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Median of per-note gold entity counts (mean of the middle two when even).
pub fn entity_count_median(corpus: &Corpus) -> Result<f64, SelectError> {
    if corpus.is_empty() {
        return Err(SelectError::EmptyCorpus);
    }
    let mut counts: Vec<f64> = corpus
        .notes
        .iter()
        .map(|n| n.gold_entities.len() as f64)
        .collect();
    counts.sort_by(f64::total_cmp);
    Ok(quantile(&counts, 0.5))
}

pub fn select_gold_subset(corpus: &Corpus, n_s: usize) -> Result<SubsetSelection, SelectError> {
    if n_s == 0 {
        return Err(SelectError::ZeroSubset);
    }
    let median = entity_count_median(corpus)?;
    let mut ranked: Vec<(f64, &str)> = corpus
        .notes
        .iter()
        .map(|n| ((n.gold_entities.len() as f64 - median).abs(), n.note_id.as_str()))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));

    let mut warnings = Vec::new();
    if n_s > ranked.len() {
        warnings.push(format!(
            "requested {n_s} gold notes but corpus has {}; all notes are gold",
            ranked.len()
        ));
        log::warn!("{}", warnings[0]);
    }
    let take = n_s.min(ranked.len());
    let gold_ids = ranked[..take].iter().map(|(_, id)| id.to_string()).collect();
    let mut weak_ids: Vec<String> = ranked[take..].iter().map(|(_, id)| id.to_string()).collect();
    weak_ids.sort();
    Ok(SubsetSelection {
        n_s,
        median,
        gold_ids,
        weak_ids,
        warnings,
    })
}
