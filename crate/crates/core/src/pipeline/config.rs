//! Run configuration: a TOML file with `[corpus] [task] [selection]
//! [gateway] [export] [cost]` sections.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Benchmark;
use crate::cost::{DecoderCostSpec, MIMIC_DISCHARGE_NOTES, SAMPLE_MAX_NOTES, SAMPLE_MIN_NOTES};
use crate::export::DEFAULT_MAX_TOKENS;
use crate::gateway::{DEFAULT_MAX_NEW_TOKENS, DEFAULT_TOP_K, URL_ENV};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Not part of the snapshot: a run directory does not name itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub export: ExportConfig,
    #[serde(default)]
    pub cost: CostConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// Standoff directory or JSON-Lines file.
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FewShotPool {
    /// Every training sentence.
    Train,
    /// Only sentences of the gold subset.
    Gold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub benchmark: Benchmark,
    #[serde(default = "default_few_shot_k")]
    pub few_shot_k: usize,
    #[serde(default = "default_pool")]
    pub few_shot_pool: FewShotPool,
    #[serde(default)]
    pub few_shot_require_entities: bool,
}

fn default_few_shot_k() -> usize {
    8
}

fn default_pool() -> FewShotPool {
    FewShotPool::Train
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    #[serde(default = "default_n_s")]
    pub n_s: usize,
}

fn default_n_s() -> usize {
    3
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { n_s: default_n_s() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewayConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock: Option<String>,
    pub model_id: String,
    pub parallelism: usize,
    pub max_new_tokens: usize,
    pub top_k: usize,
    pub timeout_secs: u64,
    pub retry_base_delay_secs: f64,
    pub max_attempts: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            url: None,
            mock: None,
            model_id: "llama2-13b-chat".into(),
            parallelism: 4,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            top_k: DEFAULT_TOP_K,
            timeout_secs: 120,
            retry_base_delay_secs: 1.0,
            max_attempts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    /// Newline-delimited piece file; the bundled fixture vocabulary if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<PathBuf>,
    pub max_tokens: usize,
    pub include_failed: bool,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            vocabulary: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            include_failed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    pub total_params: u64,
    pub n_layer: u64,
    pub n_ctx: u64,
    pub d_attn: u64,
    pub n_tokens_out: u64,
    pub target_notes: u64,
    pub sample_count: usize,
    pub sample_min: usize,
    pub sample_max: usize,
}

impl Default for CostConfig {
    fn default() -> Self {
        let d = DecoderCostSpec::LLAMA2_13B;
        CostConfig {
            total_params: d.total_params,
            n_layer: d.n_layer,
            n_ctx: d.n_ctx,
            d_attn: d.d_attn,
            n_tokens_out: d.n_tokens_out,
            target_notes: MIMIC_DISCHARGE_NOTES,
            sample_count: 10,
            sample_min: SAMPLE_MIN_NOTES,
            sample_max: SAMPLE_MAX_NOTES,
        }
    }
}

impl CostConfig {
    pub fn decoder(&self) -> DecoderCostSpec {
        DecoderCostSpec {
            total_params: self.total_params,
            n_layer: self.n_layer,
            n_ctx: self.n_ctx,
            d_attn: self.d_attn,
            n_tokens_out: self.n_tokens_out,
        }
    }
}

/// Mock backend description, as written in config files and on the
/// command line: `echo-gold`, `fixed:<text>`, `scripted:<path>` or
/// `fault:<rate>[:<inner spec>]` (inner defaults to `echo-gold`).
#[derive(Debug, Clone, PartialEq)]
pub enum MockSpec {
    EchoGold,
    Fixed(String),
    Scripted(PathBuf),
    Fault { rate: f64, inner: Box<MockSpec> },
}

impl FromStr for MockSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "echo-gold" {
            return Ok(MockSpec::EchoGold);
        }
        if let Some(text) = s.strip_prefix("fixed:") {
            return Ok(MockSpec::Fixed(text.to_string()));
        }
        if let Some(path) = s.strip_prefix("scripted:") {
            if path.is_empty() {
                return Err("scripted mock needs a path".into());
            }
            return Ok(MockSpec::Scripted(PathBuf::from(path)));
        }
        if let Some(rest) = s.strip_prefix("fault:") {
            let (rate, inner) = match rest.split_once(':') {
                Some((r, i)) => (r, i.parse()?),
                None => (rest, MockSpec::EchoGold),
            };
            let rate: f64 = rate.parse().map_err(|_| format!("bad fault rate {rate:?}"))?;
            if !(0.0..=1.0).contains(&rate) {
                return Err(format!("fault rate {rate} outside [0, 1]"));
            }
            return Ok(MockSpec::Fault {
                rate,
                inner: Box::new(inner),
            });
        }
        Err(format!("unknown mock {s:?}; expected echo-gold, fixed:, scripted: or fault:"))
    }
}

impl std::fmt::Display for MockSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MockSpec::EchoGold => f.write_str("echo-gold"),
            MockSpec::Fixed(t) => write!(f, "fixed:{t}"),
            MockSpec::Scripted(p) => write!(f, "scripted:{}", p.display()),
            MockSpec::Fault { rate, inner } => write!(f, "fault:{rate}:{inner}"),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn resolve_mock(base: &Path, spec: MockSpec) -> MockSpec {
    match spec {
        MockSpec::Scripted(p) => MockSpec::Scripted(resolve(base, &p)),
        MockSpec::Fault { rate, inner } => MockSpec::Fault {
            rate,
            inner: Box::new(resolve_mock(base, *inner)),
        },
        other => other,
    }
}

impl RunConfig {
    pub fn parse(doc: &str) -> Result<Self, PipelineError> {
        toml::from_str(doc).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Read, then resolve relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let doc = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&doc)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base)?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) -> Result<(), PipelineError> {
        self.corpus.train = resolve(base, &self.corpus.train);
        self.corpus.test = self.corpus.test.as_deref().map(|p| resolve(base, p));
        self.export.vocabulary = self.export.vocabulary.as_deref().map(|p| resolve(base, p));
        self.run_dir = self.run_dir.as_deref().map(|p| resolve(base, p));
        if let Some(m) = &self.gateway.mock {
            let spec: MockSpec = m.parse().map_err(PipelineError::Config)?;
            self.gateway.mock = Some(resolve_mock(base, spec).to_string());
        }
        Ok(())
    }

    /// A non-empty `LLM_GATEWAY_URL` replaces the configured URL. It does not
    /// displace an explicitly configured mock.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(URL_ENV) {
            if !url.trim().is_empty() && self.gateway.mock.is_none() {
                self.gateway.url = Some(url);
            }
        }
    }

    pub fn mock_spec(&self) -> Result<Option<MockSpec>, PipelineError> {
        self.gateway
            .mock
            .as_deref()
            .map(|m| m.parse().map_err(PipelineError::Config))
            .transpose()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.selection.n_s == 0 {
            return fail("selection.n_s must be at least 1");
        }
        match (&self.gateway.url, &self.gateway.mock) {
            (Some(_), Some(_)) => return fail("gateway: set either url or mock, not both"),
            (None, None) => return fail("gateway: set url or mock"),
            (Some(u), None) if u.trim().is_empty() => return fail("gateway.url is empty"),
            _ => {}
        }
        self.mock_spec()?;
        if self.gateway.parallelism == 0 {
            return fail("gateway.parallelism must be at least 1");
        }
        if self.gateway.max_new_tokens == 0 {
            return fail("gateway.max_new_tokens must be at least 1");
        }
        if self.gateway.max_attempts == 0 {
            return fail("gateway.max_attempts must be at least 1");
        }
        if !(self.gateway.retry_base_delay_secs >= 0.0 && self.gateway.retry_base_delay_secs.is_finite()) {
            return fail("gateway.retry_base_delay_secs must be a non-negative number");
        }
        if self.gateway.model_id.trim().is_empty() {
            return fail("gateway.model_id is empty");
        }
        if self.export.max_tokens == 0 {
            return fail("export.max_tokens must be at least 1");
        }
        if self.cost.sample_min > self.cost.sample_max {
            return fail("cost.sample_min exceeds cost.sample_max");
        }
        Ok(())
    }

    /// Canonical TOML without the run directory.
    pub fn snapshot(&self) -> String {
        let mut c = self.clone();
        c.run_dir = None;
        toml::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.snapshot().as_bytes()))
    }
}
