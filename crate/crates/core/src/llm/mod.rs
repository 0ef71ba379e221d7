//! Chat-completion client: an OpenAI-compatible remote backend with retries, a
//! deterministic offline mock, and scripted backends for tests.

pub mod prompt;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use log::warn;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::stable_hash64;
use prompt::markers;

pub use prompt::{render, PromptTemplate, TemplateName};

pub const ENV_API_BASE: &str = "RF_API_BASE";
pub const ENV_API_KEY: &str = "RF_API_KEY";
pub const ENV_MODEL: &str = "RF_MODEL";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request rejected before sending: {0}")]
    InvalidRequest(String),

    #[error("authentication failed (HTTP {status}): {body}")]
    Auth { status: u16, body: String },

    #[error("permanent failure (HTTP {status}): {body}")]
    Permanent { status: u16, body: String },

    #[error("gave up after {attempts} attempts; last error: {last}")]
    Exhausted {
        attempts: u32,
        last_status: Option<u16>,
        last: String,
    },

    #[error("malformed response: {0}")]
    MalformedResponse(String),

    #[error("scripted backend: {0}")]
    Scripted(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Body of `POST /v1/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(rename = "max_tokens", skip_serializing_if = "Option::is_none")]
    pub max_new_tokens: Option<u32>,
}

impl ChatRequest {
    /// Single user-turn request.
    pub fn user(model: impl Into<String>, content: impl Into<String>, temperature: f64) -> Self {
        Self {
            model: model.into(),
            messages: vec![Message {
                role: Role::User,
                content: content.into(),
            }],
            temperature,
            max_new_tokens: None,
        }
    }

    pub fn with_max_new_tokens(mut self, n: u32) -> Self {
        self.max_new_tokens = Some(n);
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if self.messages.iter().any(|m| m.content.is_empty()) {
            return Err(LlmError::InvalidRequest("empty message content".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_new_tokens == Some(0) {
            return Err(LlmError::InvalidRequest("max_new_tokens must be > 0".into()));
        }
        Ok(())
    }

    /// All message contents joined; what the mock backend hashes.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Clone, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Clone, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Anything that can answer a chat request. Implementations must be safe to
/// call from several threads at once.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

/// Validates the request and forwards it to `backend`.
pub fn complete(request: &ChatRequest, backend: &dyn ChatBackend) -> Result<String, LlmError> {
    request.validate()?;
    backend.complete(request)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay
            .mul_f64(self.factor.powi(retry.saturating_sub(1) as i32))
    }
}

enum Attempt<T> {
    Done(T),
    Retry { status: Option<u16>, message: String },
    Fail(LlmError),
}

fn classify_status(status: u16, body: String) -> Attempt<String> {
    match status {
        200..=299 => Attempt::Done(body),
        401 | 403 => Attempt::Fail(LlmError::Auth { status, body }),
        408 | 409 | 425 | 429 => Attempt::Retry {
            status: Some(status),
            message: format!("HTTP {status}: {body}"),
        },
        500..=599 => Attempt::Retry {
            status: Some(status),
            message: format!("HTTP {status}: {body}"),
        },
        _ => Attempt::Fail(LlmError::Permanent { status, body }),
    }
}

/// Blocking JSON POST with the retry policy applied. Shared by the chat and
/// embedding remote backends.
#[derive(Clone)]
pub struct HttpTransport {
    agent: ureq::Agent,
    api_key: Option<String>,
    pub retry: RetryPolicy,
}

impl HttpTransport {
    pub fn new(api_key: Option<String>, timeout: Duration, retry: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, api_key, retry }
    }

    pub fn post_json<B: Serialize>(&self, url: &str, body: &B) -> Result<String, LlmError> {
        let payload = serde_json::to_string(body).map_err(|e| LlmError::InvalidRequest(e.to_string()))?;
        let mut last_status = None;
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts {
            if attempt > 1 {
                let wait = self.retry.delay(attempt - 1);
                warn!("retrying {url} in {wait:?} (attempt {attempt}): {last}");
                thread::sleep(wait);
            }
            match self.send_once(url, &payload) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry { status, message } => {
                    last_status = status;
                    last = message;
                }
            }
        }
        Err(LlmError::Exhausted {
            attempts: self.retry.max_attempts,
            last_status,
            last,
        })
    }

    fn send_once(&self, url: &str, payload: &str) -> Attempt<String> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        match req.send(payload) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let body = resp.body_mut().read_to_string().unwrap_or_default();
                classify_status(status, body)
            }
            // Connection refused, DNS failure, timeouts: all worth another try.
            Err(e) => Attempt::Retry {
                status: None,
                message: e.to_string(),
            },
        }
    }
}

/// OpenAI-compatible chat-completions endpoint.
#[derive(Clone)]
pub struct RemoteBackend {
    pub api_base: String,
    transport: HttpTransport,
}

impl RemoteBackend {
    pub fn new(api_base: impl Into<String>, api_key: Option<String>) -> Self {
        Self::with_policy(api_base, api_key, Duration::from_secs(120), RetryPolicy::default())
    }

    pub fn with_policy(
        api_base: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Self {
        Self {
            api_base: api_base.into().trim_end_matches('/').to_string(),
            transport: HttpTransport::new(api_key, timeout, retry),
        }
    }

    /// `RF_API_BASE` / `RF_API_KEY` from the environment.
    pub fn from_env() -> Option<Self> {
        let base = std::env::var(ENV_API_BASE).ok()?;
        Some(Self::new(base, std::env::var(ENV_API_KEY).ok()))
    }

    fn url(&self) -> String {
        if self.api_base.ends_with("/v1") {
            format!("{}/chat/completions", self.api_base)
        } else {
            format!("{}/v1/chat/completions", self.api_base)
        }
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let text = self.transport.post_json(&self.url(), request)?;
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| LlmError::MalformedResponse("no choices".into()))
    }
}

/// Offline backend whose answer is a pure function of `(seed, prompt)`.
///
/// It recognises which template produced the prompt and answers in that
/// template's expected format: `Yes`/`No` for corpus filtering, a pseudo-query
/// assembled from words of the input content for generation, a `<score>` block
/// for annotation, and a short expansion for query reasoning.
#[derive(Debug, Clone, Copy)]
pub struct MockBackend {
    pub seed: u64,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng_for(&self, parts: &[&[u8]]) -> ChaCha8Rng {
        let mut all: Vec<&[u8]> = Vec::with_capacity(parts.len() + 1);
        let seed_bytes = self.seed.to_le_bytes();
        all.push(&seed_bytes);
        all.extend_from_slice(parts);
        ChaCha8Rng::seed_from_u64(stable_hash64(&all))
    }

    fn sample_words(rng: &mut ChaCha8Rng, text: &str, n: usize) -> Vec<String> {
        let words: Vec<&str> = text
            .split_whitespace()
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| words.choose(rng).expect("non-empty").to_lowercase())
            .collect()
    }
}

fn between<'a>(text: &'a str, begin: &str, end: &str) -> Option<&'a str> {
    let start = text.find(begin)? + begin.len();
    let stop = text[start..].find(end)? + start;
    Some(&text[start..stop])
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let prompt = request.prompt_text();
        let mut rng = self.rng_for(&[prompt.as_bytes()]);

        if prompt.contains(markers::FILTER) {
            let keep = rng.random_range(0..5) != 0;
            return Ok(if keep { "Yes" } else { "No" }.to_string());
        }

        if let (Some(query), Some(doc)) = (
            between(&prompt, markers::QUERY_BEGIN, markers::QUERY_END),
            between(&prompt, markers::DOC_BEGIN, markers::DOC_END),
        ) {
            let mut pair_rng = self.rng_for(&[query.as_bytes(), doc.as_bytes()]);
            let score = pair_rng.random_range(1..=5u8);
            if prompt.contains(markers::DIRECT) {
                return Ok(format!("<score>{score}</score>"));
            }
            let q_terms = Self::sample_words(&mut pair_rng, query, 3).join(", ");
            let d_terms = Self::sample_words(&mut pair_rng, doc, 3).join(", ");
            return Ok(format!(
                "1. Query Analysis: the query asks about {q_terms}.\n\
                 2. Document Analysis: the document discusses {d_terms}.\n\
                 3. Relevance Annotation: assessed against the relevance definition.\n\
                 <score>\n{score}\n</score>"
            ));
        }

        if let Some(content) = between(&prompt, markers::CONTENT_BEGIN, markers::CONTENT_END) {
            let n = rng.random_range(8..=24);
            let words = Self::sample_words(&mut rng, content, n);
            if words.is_empty() {
                return Ok(String::new());
            }
            return Ok(format!("How does {} relate to each other?", words.join(" ")));
        }

        if let Some(question) = between(&prompt, markers::QUESTION_BEGIN, markers::QUESTION_END) {
            let n = rng.random_range(6..=16);
            let words = Self::sample_words(&mut rng, question, n);
            return Ok(format!(
                "The essential problem: {question}\nRelevant information: {}.",
                words.join(" ")
            ));
        }

        Ok(format!("mock response {:016x}", rng.random::<u64>()))
    }
}

/// Replays queued responses in call order; errors once the queue is empty.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<Result<String, String>>>,
}

impl ScriptedBackend {
    pub fn new(responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            queue: Mutex::new(responses.into_iter().map(|r| Ok(r.into())).collect()),
        }
    }

    /// Queue where `Err` entries surface as [`LlmError::Scripted`].
    pub fn with_results(results: impl IntoIterator<Item = Result<String, String>>) -> Self {
        Self {
            queue: Mutex::new(results.into_iter().collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("scripted queue poisoned").len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, _request: &ChatRequest) -> Result<String, LlmError> {
        match self.queue.lock().expect("scripted queue poisoned").pop_front() {
            Some(Ok(text)) => Ok(text),
            Some(Err(e)) => Err(LlmError::Scripted(e)),
            None => Err(LlmError::Scripted("script exhausted".into())),
        }
    }
}

/// Backend answering every request with the same text.
#[derive(Debug, Clone)]
pub struct FixedBackend(pub String);

impl ChatBackend for FixedBackend {
    fn complete(&self, _request: &ChatRequest) -> Result<String, LlmError> {
        Ok(self.0.clone())
    }
}

/// Backend delegating to a closure.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (self.0)(request)
    }
}

/// Sampling parameters per pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    pub filter_temperature: f64,
    pub generation_temperature: f64,
    pub annotation_temperature: f64,
    pub reasoning_temperature: f64,
    pub reasoning_max_new_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            filter_temperature: 0.0,
            generation_temperature: 1.0,
            annotation_temperature: 0.7,
            reasoning_temperature: 1.0,
            reasoning_max_new_tokens: 1024,
        }
    }
}

/// A backend plus the model name, stage sampling settings and a bound on
/// in-flight requests.
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    pub model: String,
    pub sampling: Sampling,
    parallelism: usize,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            sampling: Sampling::default(),
            parallelism: 8,
        }
    }

    pub fn mock(seed: u64) -> Self {
        Self::new(Arc::new(MockBackend::new(seed)), "mock")
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
    }

    pub fn request(&self, prompt: impl Into<String>, temperature: f64) -> ChatRequest {
        ChatRequest::user(self.model.clone(), prompt, temperature)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        complete(request, self.backend.as_ref())
    }

    /// Runs all requests with at most `parallelism` in flight. Results come
    /// back in input order.
    pub fn complete_many(&self, requests: &[ChatRequest]) -> Vec<Result<String, LlmError>> {
        if self.parallelism == 1 || requests.len() <= 1 {
            return requests.iter().map(|r| self.complete(r)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .expect("thread pool");
        pool.install(|| {
            use rayon::prelude::*;
            requests.par_iter().map(|r| self.complete(r)).collect()
        })
    }
}
