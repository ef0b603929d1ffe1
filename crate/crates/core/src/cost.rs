//! Inference cost: closed-form decoder FLOPs and GPU-time projection by
//! least squares.

use std::collections::BTreeMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-sentence encoder cost, measured with a profiler rather than derived.
pub const ENCODER_FLOPS_PER_SENTENCE: f64 = 4.4e10;
/// Discharge summaries in the full MIMIC-III collection.
pub const MIMIC_DISCHARGE_NOTES: u64 = 59_652;
pub const SAMPLE_MIN_NOTES: usize = 50;
pub const SAMPLE_MAX_NOTES: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("all samples share note count {0}; slope is undetermined")]
    Degenerate(usize),
    #[error("sample has negative or non-finite seconds: {0}")]
    BadSample(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderCostSpec {
    pub total_params: u64,
    pub n_layer: u64,
    pub n_ctx: u64,
    pub d_attn: u64,
    pub n_tokens_out: u64,
}

impl DecoderCostSpec {
    /// Llama2-13B with a 400-token prompt and 128 generated tokens.
    pub const LLAMA2_13B: DecoderCostSpec = DecoderCostSpec {
        total_params: 13_015_864_320,
        n_layer: 40,
        n_ctx: 400,
        d_attn: 4096,
        n_tokens_out: 128,
    };
}

/// `n_tokens_out * (2N + 2 * n_layer * n_ctx * d_attn)`, exact.
pub fn decoder_flops(spec: &DecoderCostSpec) -> u128 {
    let per_token = 2 * spec.total_params as u128
        + 2 * spec.n_layer as u128 * spec.n_ctx as u128 * spec.d_attn as u128;
    spec.n_tokens_out as u128 * per_token
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub note_count: usize,
    pub gpu_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    #[serde(rename = "r2")]
    pub r_squared: f64,
}

impl LinearFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares of seconds on note count, computed on centered
/// data. `r_squared` is 1 when the response has no variance.
pub fn fit_linear(samples: &[CostSample]) -> Result<LinearFit, CostError> {
    if samples.len() < 2 {
        return Err(CostError::TooFewSamples(samples.len()));
    }
    if let Some(s) = samples.iter().find(|s| !(s.gpu_seconds >= 0.0 && s.gpu_seconds.is_finite())) {
        return Err(CostError::BadSample(s.gpu_seconds));
    }
    let first = samples[0].note_count;
    if samples.iter().all(|s| s.note_count == first) {
        return Err(CostError::Degenerate(first));
    }
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.note_count as f64).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.gpu_seconds).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for s in samples {
        let dx = s.note_count as f64 - mx;
        let dy = s.gpu_seconds - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(LinearFit {
        intercept,
        slope,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub notes: u64,
    pub seconds: f64,
    pub human: String,
    pub clamped: bool,
}

/// Days, hours and minutes, rounded to the nearest minute.
pub fn render_duration(seconds: f64) -> String {
    let minutes = (seconds.max(0.0) / 60.0).round() as u64;
    let (d, h, m) = (minutes / 1440, minutes / 60 % 24, minutes % 60);
    match d {
        0 => format!("{h} h {m} m"),
        1 => format!("1 day {h} h {m} m"),
        _ => format!("{d} days {h} h {m} m"),
    }
}

pub fn project_gpu_time(fit: &LinearFit, target_notes: u64) -> Projection {
    let raw = fit.predict(target_notes as f64);
    let clamped = raw < 0.0;
    if clamped {
        warn!("projection for {target_notes} notes is negative ({raw:.1} s); clamped to 0");
    }
    let seconds = raw.max(0.0);
    Projection {
        notes: target_notes,
        seconds,
        human: render_duration(seconds),
        clamped,
    }
}

/// Seconds per note from `(note_id, latency)` pairs, one per sentence.
/// A note with any missing latency maps to `None`.
pub fn note_seconds<'a, I>(per_sentence: I) -> BTreeMap<String, Option<f64>>
where
    I: IntoIterator<Item = (&'a str, Option<f64>)>,
{
    let mut out: BTreeMap<String, Option<f64>> = BTreeMap::new();
    for (id, lat) in per_sentence {
        let slot = out.entry(id.to_string()).or_insert(Some(0.0));
        *slot = match (*slot, lat) {
            (Some(acc), Some(l)) => Some(acc + l),
            _ => None,
        };
    }
    out
}

/// Cumulative samples: for each `k`, the summed seconds of the first `k`
/// notes of `order`. Sizes that are too large or reach a note without a
/// latency are skipped with a warning.
pub fn collect_latency_samples(
    seconds: &BTreeMap<String, Option<f64>>,
    order: &[String],
    sizes: &[usize],
) -> (Vec<CostSample>, Vec<String>) {
    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    for &k in sizes {
        if k > order.len() {
            warnings.push(format!("sample size {k} exceeds the {} notes available", order.len()));
            continue;
        }
        let mut total = 0.0;
        let mut missing = None;
        for id in &order[..k] {
            match seconds.get(id).copied().flatten() {
                Some(s) => total += s,
                None => {
                    missing = Some(id);
                    break;
                }
            }
        }
        match missing {
            Some(id) => warnings.push(format!("sample size {k} skipped: note {id} has no latency")),
            None => samples.push(CostSample {
                note_count: k,
                gpu_seconds: total,
            }),
        }
    }
    for w in &warnings {
        warn!("{w}");
    }
    (samples, warnings)
}

/// `count` sample sizes drawn uniformly from `[lo, hi]`, sorted, plus a
/// seeded note order to accumulate over. When fewer than `lo` notes exist the
/// range becomes `[1, available]`.
pub fn sampling_plan(
    note_ids: &[String],
    count: usize,
    lo: usize,
    hi: usize,
    seed: u64,
) -> (Vec<usize>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = hi.min(note_ids.len());
    let lo = if hi < lo { 1 } else { lo };
    let mut sizes: Vec<usize> = if hi == 0 {
        Vec::new()
    } else {
        (0..count).map(|_| rng.gen_range(lo.max(1)..=hi)).collect()
    };
    sizes.sort_unstable();
    let mut order = note_ids.to_vec();
    order.sort();
    order.shuffle(&mut rng);
    (sizes, order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub data_label: String,
    pub flops_per_sentence: u128,
    pub encoder_flops_per_sentence: f64,
    pub decoder: DecoderCostSpec,
    pub samples: Vec<CostSample>,
    pub fit: Option<LinearFit>,
    pub projection: Option<Projection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CostReport {
    pub fn build(decoder: DecoderCostSpec, samples: Vec<CostSample>, target_notes: u64) -> Self {
        let mut warnings = Vec::new();
        let fit = match fit_linear(&samples) {
            Ok(f) => Some(f),
            Err(e) => {
                warnings.push(format!("no fit: {e}"));
                None
            }
        };
        let projection = fit.as_ref().map(|f| project_gpu_time(f, target_notes));
        CostReport {
            data_label: crate::DATA_LABEL.to_string(),
            flops_per_sentence: decoder_flops(&decoder),
            encoder_flops_per_sentence: ENCODER_FLOPS_PER_SENTENCE,
            decoder,
            samples,
            fit,
            projection,
            warnings,
        }
    }

    /// Two summary lines: per-sentence FLOPs, then the projected GPU time.
    pub fn summary(&self) -> String {
        let ratio = self.flops_per_sentence as f64 / self.encoder_flops_per_sentence;
        let first = format!(
            "decoder {:.3e} FLOPs/sentence vs encoder {:.1e} ({ratio:.0}x)",
            self.flops_per_sentence as f64, self.encoder_flops_per_sentence
        );
        let second = match (&self.fit, &self.projection) {
            (Some(f), Some(p)) => format!(
                "projected {} for {} notes (slope {:.3} s/note, intercept {:.1} s, r2 {:.3}) [{}]",
                p.human, p.notes, f.slope, f.intercept, f.r_squared, self.data_label
            ),
            _ => "projection unavailable: not enough timing samples".to_string(),
        };
        format!("{first}\n{second}\n")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}
