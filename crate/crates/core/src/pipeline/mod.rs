//! End-to-end orchestration over a run directory.
//!
//! Stages run in a fixed order and persist everything they produce, so a
//! later stage reads its inputs from disk rather than from memory. A
//! `stage.<name>.done` marker holding the config hash records completion;
//! resuming skips marked stages up to the first one that must run, and
//! every stage after that reruns.
//!
//! Layout: `config.snapshot.toml`, `selection.json`, `ingest/`, `sft/`,
//! `cache/`, `weak/`, `export/`, `reports/`.

mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    corpus_stats, load_corpus, Benchmark, read_corpus_jsonl, write_corpus_jsonl, Corpus, EntityStats, Note,
};
use crate::cost::{collect_latency_samples, note_seconds, sampling_plan, CostReport};
use crate::distill::{distill_sentence, LabelStatus, Provenance, WeakLabelResult, WeakLabelSet};
use crate::eval::{load_predictions, EvalSummary};
use crate::export::{export_stage_datasets, ExportOptions, StageCounts, Vocabulary, GOLD_FILE, WEAK_FILE};
use crate::gateway::{
    Backend, Gateway, GenerationParams, HttpBackend, MockBackend, MockScript, ResponseCache, RetryPolicy,
};
use crate::prompt::{export_sft_dataset, sample_few_shot, PromptTemplate};
use crate::select::{select_gold_subset, SubsetSelection};

pub use config::{
    CorpusConfig, CostConfig, ExportConfig, FewShotPool, GatewayConfig, MockSpec, RunConfig, SelectionConfig,
    TaskConfig,
};

pub const SNAPSHOT_FILE: &str = "config.snapshot.toml";
pub const SELECTION_FILE: &str = "selection.json";
pub const REPORT_FILE: &str = "reports/run_report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Select,
    SftExport,
    WeakLabel,
    Stats,
    TrainExport,
    Cost,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Select,
        Stage::SftExport,
        Stage::WeakLabel,
        Stage::Stats,
        Stage::TrainExport,
        Stage::Cost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Select => "select",
            Stage::SftExport => "sft-export",
            Stage::WeakLabel => "weak-label",
            Stage::Stats => "stats",
            Stage::TrainExport => "train-export",
            Stage::Cost => "cost",
        }
    }

    pub fn marker(self) -> String {
        format!("stage.{}.done", self.name())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage {
        stage: Stage,
        message: String,
        report: Box<RunReport>,
    },
    #[error("{0}")]
    Io(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } | PipelineError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Completed,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub duration_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakLabelSummary {
    pub sentences: usize,
    pub ok: usize,
    pub empty: usize,
    pub failed: usize,
    pub generation_errors: usize,
    pub all_failed: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    pub total: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub weak: StageCounts,
    pub gold: StageCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub gold: EntityStats,
    pub weak: Option<EntityStats>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_dir: PathBuf,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
    pub selection: Option<SubsetSelection>,
    pub weak_label: Option<WeakLabelSummary>,
    /// Present only when the weak-label stage ran in this invocation.
    pub weak_label_calls: Option<CallCounts>,
    pub stats: Option<StatsSummary>,
    pub export: Option<ExportSummary>,
    pub cost: Option<CostReport>,
    pub flags: Vec<String>,
}

impl RunReport {
    pub fn status(&self, stage: Stage) -> Option<StageStatus> {
        self.stages.iter().find(|r| r.stage == stage).map(|r| r.status)
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

fn write(path: &Path, body: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, body).map_err(|e| io_err(path, e))
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, String> {
    serde_json::from_str(&read(path)?).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Standoff directory or JSON-Lines file, segmented and type-checked.
pub fn ingest_corpus(path: &Path, benchmark: Benchmark) -> Result<Corpus, String> {
    let schema = benchmark.schema();
    let corpus = if path.is_dir() {
        load_corpus(path, &schema).map_err(|e| e.to_string())?
    } else {
        let notes = read_corpus_jsonl(&read(path)?).map_err(|e| io_err(path, e))?;
        let notes: Vec<Note> = notes
            .into_iter()
            .map(|n| if n.sentences.is_empty() { n.segmented() } else { n })
            .collect();
        let c = Corpus::new(notes);
        c.check_types(&schema).map_err(|e| e.to_string())?;
        c
    };
    if corpus.is_empty() {
        return Err(format!("{}: no notes", path.display()));
    }
    Ok(corpus)
}

/// The few-shot template a run with `config` uses, given its training corpus
/// and gold subset.
pub fn build_template(config: &RunConfig, train: &Corpus, gold: &Corpus) -> Result<PromptTemplate, String> {
    let pool = match config.task.few_shot_pool {
        FewShotPool::Train => train,
        FewShotPool::Gold => gold,
    };
    let examples = sample_few_shot(
        pool,
        config.task.few_shot_k,
        config.seed,
        config.task.few_shot_require_entities,
    )
    .map_err(|e| e.to_string())?;
    Ok(PromptTemplate::new(config.task.benchmark.schema(), examples))
}

fn build_script(spec: &MockSpec, corpus: &Corpus, seed: u64) -> Result<MockScript, String> {
    Ok(match spec {
        MockSpec::EchoGold => MockScript::echo_gold(corpus),
        MockSpec::Fixed(t) => MockScript::Fixed(t.clone()),
        MockSpec::Scripted(p) => MockScript::from_script_file(p)?,
        MockSpec::Fault { rate, inner } => MockScript::fault_inject(*rate, seed, build_script(inner, corpus, seed)?),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct LatencyLine {
    note_id: String,
    sentence_index: usize,
    latency: Option<f64>,
}

struct Runner {
    config: RunConfig,
    dir: PathBuf,
    hash: String,
    report: RunReport,
}

impl Runner {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn train(&self) -> Result<Corpus, String> {
        let p = self.path("ingest/train.jsonl");
        Ok(Corpus::new(read_corpus_jsonl(&read(&p)?).map_err(|e| io_err(&p, e))?))
    }

    fn selection(&self) -> Result<SubsetSelection, String> {
        read_json(&self.path(SELECTION_FILE))
    }

    fn template(&self) -> Result<PromptTemplate, String> {
        read_json(&self.path("sft/template.json"))
    }

    fn provenance(&self) -> Result<Provenance, String> {
        read_json(&self.path("weak/provenance.json"))
    }

    fn weak_set(&self) -> Result<WeakLabelSet, String> {
        let p = self.path("weak/labels.jsonl");
        WeakLabelSet::from_jsonl(&read(&p)?, self.provenance()?).map_err(|e| io_err(&p, e))
    }

    fn marker_valid(&self, stage: Stage) -> bool {
        fs::read_to_string(self.path(&stage.marker())).is_ok_and(|h| h.trim() == self.hash)
    }

    fn run_stage(&mut self, stage: Stage) -> Result<(), String> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Select => self.select(),
            Stage::SftExport => self.sft_export(),
            Stage::WeakLabel => self.weak_label(),
            Stage::Stats => self.stats(),
            Stage::TrainExport => self.train_export(),
            Stage::Cost => self.cost(),
        }
    }

    fn ingest(&mut self) -> Result<(), String> {
        let train = ingest_corpus(&self.config.corpus.train, self.config.task.benchmark)?;
        write(&self.path("ingest/train.jsonl"), &write_corpus_jsonl(&train.notes))?;
        let test_path = self.path("ingest/test.jsonl");
        match &self.config.corpus.test {
            Some(p) => {
                let test = ingest_corpus(p, self.config.task.benchmark)?;
                write(&test_path, &write_corpus_jsonl(&test.notes))?;
            }
            None => {
                let _ = fs::remove_file(&test_path);
            }
        }
        info!("ingested {} training notes", train.len());
        Ok(())
    }

    fn select(&mut self) -> Result<(), String> {
        let sel = select_gold_subset(&self.train()?, self.config.selection.n_s).map_err(|e| e.to_string())?;
        for w in &sel.warnings {
            warn!("{w}");
        }
        write(&self.path(SELECTION_FILE), &to_json(&sel))
    }

    fn sft_export(&mut self) -> Result<(), String> {
        let train = self.train()?;
        let sel = self.selection()?;
        let gold = train.subset(&sel.gold_ids);
        let template = build_template(&self.config, &train, &gold)?;
        let (records, manifest) = export_sft_dataset(&gold, &template).map_err(|e| e.to_string())?;
        write(&self.path("sft/template.json"), &to_json(&template))?;
        write(&self.path("sft/template.txt"), &template.snapshot())?;
        write(&self.path("sft/sft.jsonl"), &records)?;
        write(&self.path("sft/manifest.json"), &to_json(&manifest))
    }

    fn gateway(&self, train: &Corpus) -> Result<Gateway, String> {
        let g = &self.config.gateway;
        let (backend, retry): (Box<dyn Backend>, RetryPolicy) = match (self.config.mock_spec(), &g.url) {
            (Ok(Some(spec)), _) => (
                Box::new(MockBackend::new(build_script(&spec, train, self.config.seed)?)),
                // waiting out a deterministic mock gains nothing
                RetryPolicy {
                    base_delay: Duration::ZERO,
                    max_attempts: g.max_attempts,
                    ..RetryPolicy::default()
                },
            ),
            (_, Some(url)) => (
                Box::new(HttpBackend::new(url, Duration::from_secs(g.timeout_secs)).map_err(|e| e.to_string())?),
                RetryPolicy {
                    base_delay: Duration::from_secs_f64(g.retry_base_delay_secs),
                    max_attempts: g.max_attempts,
                    ..RetryPolicy::default()
                },
            ),
            (Err(e), _) => return Err(e.to_string()),
            (Ok(None), None) => return Err("no backend configured".into()),
        };
        Ok(Gateway::new(backend)
            .with_cache(ResponseCache::new(self.path("cache")))
            .with_retry(retry))
    }

    fn weak_label(&mut self) -> Result<(), String> {
        let train = self.train()?;
        let sel = self.selection()?;
        let template = self.template()?;
        let schema = self.config.task.benchmark.schema();
        let g = &self.config.gateway;
        let params = GenerationParams {
            max_new_tokens: g.max_new_tokens,
            top_k: g.top_k,
            ..GenerationParams::new(g.model_id.clone())
        };

        let mut weak_ids = sel.weak_ids.clone();
        weak_ids.sort();
        let mut slots = Vec::new();
        for id in &weak_ids {
            let note = train.get(id).ok_or_else(|| format!("weak note {id} not in corpus"))?;
            slots.extend(note.sentences.iter().map(|s| (note, s)));
        }
        let texts: Vec<String> = slots.iter().map(|(_, s)| s.text.clone()).collect();
        let gateway = self.gateway(&train)?;
        let generated = gateway.run_batch(&texts, &template, &params, g.parallelism);

        let mut results = Vec::with_capacity(slots.len());
        let mut latencies = String::new();
        let mut calls = CallCounts::default();
        let mut generation_errors = 0;
        for ((note, s), r) in slots.iter().zip(generated) {
            calls.total += 1;
            let latency = match r {
                Ok(gen) => {
                    calls.cache_hits += usize::from(gen.from_cache);
                    results.push(distill_sentence(&note.note_id, s, &gen.text, &schema));
                    Some(gen.latency)
                }
                Err(e) => {
                    generation_errors += 1;
                    results.push(WeakLabelResult::generation_failed(&note.note_id, s.index, e.to_string()));
                    None
                }
            };
            let line = LatencyLine {
                note_id: note.note_id.clone(),
                sentence_index: s.index,
                latency,
            };
            latencies.push_str(&serde_json::to_string(&line).expect("serializable"));
            latencies.push('\n');
        }

        let provenance = Provenance {
            model_id: params.model_id.clone(),
            template_digest: template.digest(),
            max_new_tokens: params.max_new_tokens,
            top_k: params.top_k,
        };
        let set = WeakLabelSet::new(results, provenance.clone()).map_err(|e| e.to_string())?;
        let summary = WeakLabelSummary {
            sentences: set.results.len(),
            ok: set.count(LabelStatus::Ok),
            empty: set.count(LabelStatus::Empty),
            failed: set.count(LabelStatus::Failed),
            generation_errors,
            all_failed: !set.results.is_empty() && set.count(LabelStatus::Failed) == set.results.len(),
        };
        write(&self.path("weak/labels.jsonl"), &set.to_jsonl())?;
        write(&self.path("weak/provenance.json"), &to_json(&provenance))?;
        write(&self.path("weak/latencies.jsonl"), &latencies)?;
        write(&self.path("weak/summary.json"), &to_json(&summary))?;
        info!(
            "weak labels: {} sentences, {} failed, {} of {} calls from cache",
            summary.sentences, summary.failed, calls.cache_hits, calls.total
        );
        self.report.weak_label_calls = Some(calls);
        Ok(())
    }

    fn stats(&mut self) -> Result<(), String> {
        let train = self.train()?;
        let sel = self.selection()?;
        let gold = corpus_stats(&train, None).map_err(|e| e.to_string())?;
        write(&self.path("reports/stats_gold.csv"), &gold.to_csv())?;
        let weak_set = self.weak_set()?;
        let weak = if weak_set.results.is_empty() {
            None
        } else {
            let weak_corpus = train.subset(&sel.weak_ids);
            let s = corpus_stats(&weak_corpus, Some(&weak_set)).map_err(|e| e.to_string())?;
            write(&self.path("weak/summary.csv"), &s.to_csv())?;
            Some(s)
        };
        write(&self.path("reports/stats.json"), &to_json(&StatsSummary { gold, weak }))
    }

    fn train_export(&mut self) -> Result<(), String> {
        let train = self.train()?;
        let sel = self.selection()?;
        let weak = self.weak_set()?;
        let vocab = match &self.config.export.vocabulary {
            Some(p) => Vocabulary::from_file(p).map_err(|e| e.to_string())?,
            None => Vocabulary::fixture(),
        };
        let opts = ExportOptions {
            max_tokens: self.config.export.max_tokens,
            include_failed: self.config.export.include_failed,
            seed: self.config.seed,
        };
        let out = export_stage_datasets(&train, &weak, &sel, self.config.task.benchmark, &vocab, &opts)
            .map_err(|e| e.to_string())?;
        write(&self.path(&format!("export/{WEAK_FILE}")), &out.weak_bio)?;
        write(&self.path(&format!("export/{GOLD_FILE}")), &out.gold_bio)?;
        write(&self.path("export/manifest.json"), &to_json(&out.manifest))?;
        let summary = ExportSummary {
            weak: out.weak_counts,
            gold: out.gold_counts,
        };
        write(&self.path("export/summary.json"), &to_json(&summary))
    }

    fn cost(&mut self) -> Result<(), String> {
        let p = self.path("weak/latencies.jsonl");
        let mut lines = Vec::new();
        for (i, l) in read(&p)?.lines().enumerate() {
            let line: LatencyLine = serde_json::from_str(l).map_err(|e| format!("{} line {}: {e}", p.display(), i + 1))?;
            lines.push(line);
        }
        let seconds = note_seconds(lines.iter().map(|l| (l.note_id.as_str(), l.latency)));
        let ids: Vec<String> = seconds.keys().cloned().collect();
        let c = &self.config.cost;
        let (sizes, order) = sampling_plan(&ids, c.sample_count, c.sample_min, c.sample_max, self.config.seed);
        let (samples, warnings) = collect_latency_samples(&seconds, &order, &sizes);
        let mut report = CostReport::build(c.decoder(), samples, c.target_notes);
        report.warnings.splice(0..0, warnings);
        write(&self.path("reports/cost.json"), &report.to_json())?;
        write(&self.path("reports/cost.txt"), &report.summary())
    }

    /// Fill report sections from whatever artifacts exist.
    fn collect(&mut self) {
        let r = &mut self.report;
        r.selection = read_json(&self.dir.join(SELECTION_FILE)).ok();
        r.weak_label = read_json(&self.dir.join("weak/summary.json")).ok();
        r.stats = read_json(&self.dir.join("reports/stats.json")).ok();
        r.export = read_json(&self.dir.join("export/summary.json")).ok();
        r.cost = read_json(&self.dir.join("reports/cost.json")).ok();
        r.flags.clear();
        if let Some(w) = &r.weak_label {
            if w.all_failed {
                r.flags.push(format!("post-processing failed for all {} weak sentences", w.sentences));
            }
        }
    }

    fn persist_report(&self) -> Result<(), PipelineError> {
        write(&self.path(REPORT_FILE), &to_json(&self.report)).map_err(PipelineError::Io)
    }

    fn execute(mut self, force: bool) -> Result<RunReport, PipelineError> {
        let mut dirty = force;
        for stage in Stage::ALL {
            if !dirty && self.marker_valid(stage) {
                self.report.stages.push(StageRecord {
                    stage,
                    status: StageStatus::Skipped,
                    duration_secs: 0.0,
                    error: None,
                });
                continue;
            }
            dirty = true;
            let marker = self.path(&stage.marker());
            let _ = fs::remove_file(&marker);
            let started = Instant::now();
            info!("stage {stage}");
            let outcome = self.run_stage(stage).and_then(|()| write(&marker, &format!("{}\n", self.hash)));
            let duration_secs = started.elapsed().as_secs_f64();
            match outcome {
                Ok(()) => self.report.stages.push(StageRecord {
                    stage,
                    status: StageStatus::Completed,
                    duration_secs,
                    error: None,
                }),
                Err(message) => {
                    self.report.stages.push(StageRecord {
                        stage,
                        status: StageStatus::Failed,
                        duration_secs,
                        error: Some(message.clone()),
                    });
                    self.collect();
                    self.persist_report()?;
                    return Err(PipelineError::Stage {
                        stage,
                        message,
                        report: Box::new(self.report),
                    });
                }
            }
        }
        self.collect();
        self.persist_report()?;
        Ok(self.report)
    }
}

fn runner(config: RunConfig, dir: PathBuf) -> Runner {
    let hash = config.hash();
    Runner {
        report: RunReport {
            run_dir: dir.clone(),
            config_hash: hash.clone(),
            ..RunReport::default()
        },
        config,
        dir,
        hash,
    }
}

/// Run every stage into `config.run_dir`. Cached generations in the
/// directory are reused.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let dir = config
        .run_dir
        .clone()
        .ok_or_else(|| PipelineError::Config("run_dir is not set".into()))?;
    fs::create_dir_all(&dir).map_err(|e| PipelineError::Io(io_err(&dir, e)))?;
    write(&dir.join(SNAPSHOT_FILE), &config.snapshot()).map_err(PipelineError::Io)?;
    runner(config.clone(), dir).execute(true)
}

/// Continue a run from its first incomplete stage. When `config` is given
/// it must hash to the same value as the snapshot.
pub fn resume(run_dir: &Path, config: Option<&RunConfig>) -> Result<RunReport, PipelineError> {
    let snap_path = run_dir.join(SNAPSHOT_FILE);
    let doc = fs::read_to_string(&snap_path)
        .map_err(|e| PipelineError::Config(format!("no config snapshot: {}", io_err(&snap_path, e))))?;
    let mut snap = RunConfig::parse(&doc)?;
    snap.validate()?;
    if let Some(c) = config {
        if c.hash() != snap.hash() {
            return Err(PipelineError::Config(format!(
                "config drift: {} differs from the snapshot in {}",
                c.hash(),
                run_dir.display()
            )));
        }
    }
    let hash = snap.hash();
    for stage in Stage::ALL {
        if let Ok(h) = fs::read_to_string(run_dir.join(stage.marker())) {
            if h.trim() != hash {
                return Err(PipelineError::Config(format!(
                    "config drift: marker for {stage} was written under config {}",
                    h.trim()
                )));
            }
        }
    }
    snap.run_dir = Some(run_dir.to_path_buf());
    runner(snap, run_dir.to_path_buf()).execute(false)
}

/// Score `predictions` against the run's test corpus, or its training corpus
/// when no test corpus was configured. Writes `reports/eval.{csv,json}`.
pub fn evaluate_predictions(run_dir: &Path, predictions: &Path) -> Result<EvalSummary, PipelineError> {
    let test = run_dir.join("ingest/test.jsonl");
    let reference = if test.exists() { test } else { run_dir.join("ingest/train.jsonl") };
    let doc = read(&reference).map_err(|e| PipelineError::Config(format!("run has no ingested corpus: {e}")))?;
    let gold = Corpus::new(read_corpus_jsonl(&doc).map_err(|e| PipelineError::Io(io_err(&reference, e)))?);
    let pred_doc = read(predictions).map_err(PipelineError::Config)?;
    let pred = load_predictions(&pred_doc, &gold).map_err(|e| PipelineError::Config(io_err(predictions, e)))?;
    let summary = EvalSummary::evaluate(&gold, &pred).map_err(|e| PipelineError::Config(e.to_string()))?;
    write(&run_dir.join("reports/eval.csv"), &summary.to_csv()).map_err(PipelineError::Io)?;
    write(&run_dir.join("reports/eval.json"), &summary.to_json()).map_err(PipelineError::Io)?;
    Ok(summary)
}
