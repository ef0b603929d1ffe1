//! Two-stage fine-tuning manifest and its hyperparameter catalog.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Benchmark;
use crate::DATA_LABEL;

pub const EARLY_STOP_PATIENCE: usize = 8;
pub const CHECKPOINT_SELECTION: &str = "best-validation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Weak,
    Gold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub validation_ratio: f64,
    pub input_token_length: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

struct CatalogRow {
    benchmark: Benchmark,
    n_s: usize,
    stage: StageKind,
    hp: Hyperparameters,
}

const fn hp(validation_ratio: f64, batch_size: usize) -> Hyperparameters {
    Hyperparameters {
        validation_ratio,
        input_token_length: 256,
        learning_rate: 2e-6,
        batch_size,
    }
}

macro_rules! rows {
    ($($b:ident $n:literal $s:ident $v:literal $bs:literal;)*) => {
        &[$(CatalogRow { benchmark: Benchmark::$b, n_s: $n, stage: StageKind::$s, hp: hp($v, $bs) },)*]
    };
}

/// Written out row by row rather than computed, so each entry can be checked
/// against the published table on its own.
const CATALOG: &[CatalogRow] = rows! {
    Temporal2012 3 Gold 0.34 1;   Temporal2012 3 Weak 0.2 32;
    Temporal2012 5 Gold 0.2 2;    Temporal2012 5 Weak 0.2 32;
    Temporal2012 10 Gold 0.2 2;   Temporal2012 10 Weak 0.2 32;
    Temporal2012 50 Gold 0.2 2;   Temporal2012 50 Weak 0.2 32;
    Deid2014 3 Gold 0.34 1;       Deid2014 3 Weak 0.2 32;
    Deid2014 5 Gold 0.2 2;        Deid2014 5 Weak 0.2 32;
    Deid2014 10 Gold 0.2 2;       Deid2014 10 Weak 0.2 32;
    Deid2014 50 Gold 0.2 2;       Deid2014 50 Weak 0.2 32;
    Medication2018 3 Gold 0.34 1; Medication2018 3 Weak 0.2 32;
    Medication2018 5 Gold 0.2 2;  Medication2018 5 Weak 0.2 32;
    Medication2018 10 Gold 0.2 2; Medication2018 10 Weak 0.2 32;
    Medication2018 50 Gold 0.2 2; Medication2018 50 Weak 0.2 32;
};

/// Catalog entry for the combination, if it is one of the published ones.
pub fn catalog_lookup(benchmark: Benchmark, n_s: usize, stage: StageKind) -> Option<Hyperparameters> {
    CATALOG
        .iter()
        .find(|r| r.benchmark == benchmark && r.n_s == n_s && r.stage == stage)
        .map(|r| r.hp)
}

/// Catalog entry, or the nearest convention for sizes outside it. The flag
/// says whether the values came from the catalog.
pub fn hyperparameters(benchmark: Benchmark, n_s: usize, stage: StageKind) -> (Hyperparameters, bool) {
    match catalog_lookup(benchmark, n_s, stage) {
        Some(h) => (h, true),
        None => {
            let fallback = match stage {
                StageKind::Weak => hp(0.2, 32),
                StageKind::Gold if n_s <= 3 => hp(0.34, 1),
                StageKind::Gold => hp(0.2, 2),
            };
            (fallback, false)
        }
    }
}

/// Split notes into train and validation by note. The validation share is
/// `round(ratio * n)` clamped to `[1, n - 1]` whenever `n >= 2`.
pub fn split_notes(ids: &[String], ratio: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    let n = ids.len();
    if n < 2 {
        return (ids.to_vec(), Vec::new());
    }
    let n_val = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut shuffled = ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = shuffled.split_off(n - n_val);
    shuffled.sort();
    val.sort();
    (shuffled, val)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub name: StageKind,
    pub source: String,
    pub notes: Vec<String>,
    pub train_notes: Vec<String>,
    pub validation_notes: Vec<String>,
    pub examples: usize,
    pub hyperparameters: Hyperparameters,
    pub catalog_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub task_id: String,
    pub n_s: usize,
    pub stages: Vec<StageManifest>,
    pub early_stop_patience: usize,
    pub checkpoint_selection: String,
    pub data_label: String,
}

impl TrainingManifest {
    pub fn new(task_id: &str, n_s: usize, weak: StageManifest, gold: StageManifest) -> Self {
        TrainingManifest {
            task_id: task_id.to_string(),
            n_s,
            stages: vec![weak, gold],
            early_stop_patience: EARLY_STOP_PATIENCE,
            checkpoint_selection: CHECKPOINT_SELECTION.to_string(),
            data_label: DATA_LABEL.to_string(),
        }
    }

    pub fn stage(&self, kind: StageKind) -> Option<&StageManifest> {
        self.stages.iter().find(|s| s.name == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}
