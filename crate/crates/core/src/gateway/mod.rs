//! Text generation over a remote completion server or a scripted mock, with
//! a content-addressed response cache and bounded-parallel batches.

mod cache;
mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{PromptError, PromptTemplate, EOS};

pub use cache::{CacheEntry, ResponseCache};
pub use http::HttpBackend;
pub use mock::{prompt_input, MockBackend, MockScript};

pub const DEFAULT_MAX_NEW_TOKENS: usize = 128;
pub const DEFAULT_TOP_K: usize = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const URL_ENV: &str = "LLM_GATEWAY_URL";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub model_id: String,
    pub prompt: String,
    pub max_new_tokens: usize,
    pub top_k: usize,
    pub stop: Vec<String>,
}

impl GenerationRequest {
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        GenerationRequest {
            model_id: model_id.into(),
            prompt: prompt.into(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            top_k: DEFAULT_TOP_K,
            stop: vec![EOS.to_string()],
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_new_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_new_tokens must be >= 1".into()));
        }
        if self.top_k == 0 {
            return Err(GatewayError::InvalidRequest("top_k must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the request, lowercase hex.
    pub fn cache_key(&self) -> String {
        // field order is fixed by the struct definition
        let canonical = serde_json::to_vec(self).expect("serializable");
        hex::encode(Sha256::digest(&canonical))
    }
}

/// Per-batch defaults applied to every prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    pub max_new_tokens: usize,
    pub top_k: usize,
    pub stop: Vec<String>,
}

impl GenerationParams {
    pub fn new(model_id: impl Into<String>) -> Self {
        GenerationParams {
            model_id: model_id.into(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            top_k: DEFAULT_TOP_K,
            stop: vec![EOS.to_string()],
        }
    }

    pub fn request(&self, prompt: String) -> GenerationRequest {
        GenerationRequest {
            model_id: self.model_id.clone(),
            prompt,
            max_new_tokens: self.max_new_tokens,
            top_k: self.top_k,
            stop: self.stop.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    /// Seconds spent generating (as cached, for cache hits).
    pub latency: f64,
    pub from_cache: bool,
}

/// What a backend hands back for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Latency reported by the backend itself; wall time is used when absent.
    pub latency: Option<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Connection-level failure; retried.
    #[error("transport: {0}")]
    Transport(String),
    #[error("server returned {status}: {body}")]
    Status { status: u16, body: String },
    #[error("{0}")]
    Other(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &GenerationRequest) -> Result<Completion, BackendError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("server returned {status}: {body_excerpt}")]
    Status { status: u16, body_excerpt: String },
    #[error("backend: {0}")]
    Backend(String),
    #[error("prompt: {0}")]
    Prompt(#[from] PromptError),
    #[error("cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base_delay: Duration,
    pub factor: u32,
    pub max_attempts: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base_delay: Duration::from_secs(1),
            factor: 2,
            max_attempts: 5,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based count of failures so far).
    pub fn delay(&self, attempt: usize) -> Duration {
        self.base_delay * self.factor.saturating_pow(attempt.saturating_sub(1) as u32)
    }
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Gateway {
            backend,
            cache: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        request.validate()?;
        let key = request.cache_key();
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key).map_err(|e| GatewayError::Cache(e.to_string()))? {
                return Ok(GenerationResult {
                    text: hit.text,
                    latency: hit.latency,
                    from_cache: true,
                });
            }
        }

        let mut attempt = 0;
        let completion = loop {
            attempt += 1;
            let started = Instant::now();
            match self.backend.complete(request) {
                Ok(c) => {
                    let latency = c.latency.unwrap_or_else(|| started.elapsed().as_secs_f64());
                    break Completion {
                        text: c.text,
                        latency: Some(latency.max(0.0)),
                    };
                }
                Err(BackendError::Transport(message)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(GatewayError::Transport {
                            attempts: attempt,
                            message,
                        });
                    }
                    log::debug!("attempt {attempt} failed: {message}; retrying");
                    thread::sleep(self.retry.delay(attempt));
                }
                Err(BackendError::Status { status, body }) => {
                    return Err(GatewayError::Status {
                        status,
                        body_excerpt: body.chars().take(200).collect(),
                    })
                }
                Err(BackendError::Other(m)) => return Err(GatewayError::Backend(m)),
            }
        };

        let latency = completion.latency.unwrap_or(0.0);
        if let Some(cache) = &self.cache {
            cache
                .put(
                    &key,
                    &CacheEntry {
                        request: request.clone(),
                        text: completion.text.clone(),
                        latency,
                    },
                )
                .map_err(|e| GatewayError::Cache(e.to_string()))?;
        }
        Ok(GenerationResult {
            text: completion.text,
            latency,
            from_cache: false,
        })
    }

    /// Run many requests with at most `parallelism` in flight. Results come
    /// back in input order; a failing request fills its own slot only.
    pub fn generate_all(
        &self,
        requests: &[GenerationRequest],
        parallelism: usize,
    ) -> Vec<Result<GenerationResult, GatewayError>> {
        let workers = parallelism.max(1).min(requests.len().max(1));
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<GenerationResult, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let r = self.generate(&requests[i]);
                    *slots[i].lock().unwrap() = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every slot filled"))
            .collect()
    }

    /// Render each sentence into the template and generate.
    pub fn run_batch(
        &self,
        sentences: &[String],
        template: &PromptTemplate,
        params: &GenerationParams,
        parallelism: usize,
    ) -> Vec<Result<GenerationResult, GatewayError>> {
        let rendered: Vec<Result<GenerationRequest, PromptError>> = sentences
            .iter()
            .map(|s| template.render_inference_prompt(s).map(|p| params.request(p)))
            .collect();
        let ok: Vec<GenerationRequest> = rendered.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
        let mut generated = self.generate_all(&ok, parallelism).into_iter();
        rendered
            .into_iter()
            .map(|r| match r {
                Ok(_) => generated.next().expect("one result per request"),
                Err(e) => Err(GatewayError::Prompt(e)),
            })
            .collect()
    }
}
