//! Raw-completion HTTP backend: `POST {base_url}/v1/completions`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Completion, GenerationRequest};

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: usize,
    top_k: usize,
    stop: &'a [String],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

pub struct HttpBackend {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Other(e.to_string()))?;
        Ok(HttpBackend {
            endpoint: format!("{}/v1/completions", base_url.trim_end_matches('/')),
            client,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<Completion, BackendError> {
        let body = CompletionBody {
            model: &request.model_id,
            prompt: &request.prompt,
            max_tokens: request.max_new_tokens,
            top_k: request.top_k,
            stop: &request.stop,
        };
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text.chars().take(200).collect(),
            });
        }
        let parsed: CompletionResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Other(format!("malformed completion response: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Other("completion response has no choices".into()))?;
        Ok(Completion {
            text: choice.text,
            latency: None,
        })
    }
}
