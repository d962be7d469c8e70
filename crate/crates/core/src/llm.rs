//! Text-completion providers: an OpenAI-compatible HTTP client and an offline
//! deterministic mock.
//!
//! The HTTP client speaks the legacy text-completions protocol
//! (`prompt`, `temperature`, `max_tokens`, `stop`) and reads the first
//! choice's `text`. HTTP 429, 5xx and transport failures are retried with
//! exponential backoff. A semaphore shared by all clones of a client bounds
//! the number of requests in flight.

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::StreamExt;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::fixtures;
use crate::hash::Fnv1a;
use crate::stage2::DEFAULT_SENTINEL;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("authentication failed (HTTP {status})")]
    Auth { status: u16 },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key. Empty disables
    /// the `Authorization` header (local servers).
    pub api_key_env: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub timeout_seconds: u64,
    pub max_retries: u32,
    pub max_parallel: usize,
    /// First retry delay; doubles per attempt.
    pub backoff_base_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8000/v1/completions".to_string(),
            model: "gpt-3.5-turbo-instruct".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            temperature: 0.75,
            max_new_tokens: 256,
            timeout_seconds: 120,
            max_retries: 4,
            max_parallel: 4,
            backoff_base_ms: 500,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidConfig(format!("temperature {} < 0", self.temperature)));
        }
        if self.max_new_tokens < 1 {
            return Err(LlmError::InvalidConfig("max_new_tokens must be >= 1".into()));
        }
        if self.max_parallel < 1 {
            return Err(LlmError::InvalidConfig("max_parallel must be >= 1".into()));
        }
        reqwest::Url::parse(&self.endpoint_url)
            .map_err(|e| LlmError::InvalidConfig(format!("endpoint {:?}: {e}", self.endpoint_url)))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionRequest {
    pub prompt: String,
    /// Stop sequences, forwarded to endpoints that support them.
    pub stop: Vec<String>,
    /// Per-item seed; only the mock uses it.
    pub seed: u64,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, seed: u64) -> Self {
        Self {
            prompt: prompt.into(),
            stop: Vec::new(),
            seed,
        }
    }

    pub fn with_stop(mut self, stop: impl Into<String>) -> Self {
        self.stop.push(stop.into());
        self
    }
}

#[async_trait]
pub trait Completer: Send + Sync {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError>;

    /// Upper bound on concurrent calls a batch should issue.
    fn max_parallel(&self) -> usize {
        1
    }
}

/// Runs `task(i)` for `i in 0..n` with at most `max_parallel` in flight and
/// returns results in index order.
pub async fn dispatch_ordered<T, F, Fut>(n: usize, max_parallel: usize, task: F) -> Vec<T>
where
    F: Fn(usize) -> Fut,
    Fut: Future<Output = T>,
{
    futures::stream::iter(0..n)
        .map(task)
        .buffered(max_parallel.max(1))
        .collect()
        .await
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

enum Attempt {
    Done(Completion),
    Retry(String),
}

#[derive(Debug, Clone)]
pub struct HttpCompleter {
    config: ProviderConfig,
    client: reqwest::Client,
    api_key: Option<String>,
    limiter: Arc<Semaphore>,
}

impl HttpCompleter {
    pub fn new(config: ProviderConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = if config.api_key_env.is_empty() {
            None
        } else {
            Some(std::env::var(&config.api_key_env).map_err(|_| LlmError::MissingApiKey(config.api_key_env.clone()))?)
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(config.timeout_seconds.max(1)))
            .build()
            .map_err(|e| LlmError::Other(e.to_string()))?;
        let limiter = Arc::new(Semaphore::new(config.max_parallel));
        Ok(Self {
            config,
            client,
            api_key,
            limiter,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.saturating_sub(1).min(16);
        Duration::from_millis(self.config.backoff_base_ms.saturating_mul(factor).min(30_000))
    }

    async fn attempt(&self, body: &[u8]) -> Result<Attempt, LlmError> {
        let _permit = self.limiter.acquire().await.expect("semaphore is never closed");
        let mut req = self
            .client
            .post(&self.config.endpoint_url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Ok(Attempt::Retry(format!("HTTP {status}")));
        }
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(LlmError::Auth {
                status: status.as_u16(),
            });
        }
        let text = match resp.text().await {
            Ok(t) => t,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        if !status.is_success() {
            return Err(LlmError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: WireResponse = serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Malformed("no choices".into()))?;
        let finish_reason = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            _ => FinishReason::Stop,
        };
        Ok(Attempt::Done(Completion {
            text: choice.text,
            finish_reason,
        }))
    }
}

#[async_trait]
impl Completer for HttpCompleter {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        // serialized once so that retries resend identical bytes
        let body = serde_json::to_vec(&WireRequest {
            model: &self.config.model,
            prompt: &request.prompt,
            temperature: self.config.temperature,
            max_tokens: self.config.max_new_tokens,
            stop: &request.stop,
        })
        .expect("request serializes");
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body).await? {
                Attempt::Done(c) => return Ok(c),
                Attempt::Retry(last) if attempts > self.config.max_retries => {
                    return Err(LlmError::RetriesExhausted { attempts, last });
                }
                Attempt::Retry(last) => {
                    tracing::warn!(attempt = attempts, %last, "retrying completion");
                    tokio::time::sleep(self.backoff(attempts)).await;
                }
            }
        }
    }

    fn max_parallel(&self) -> usize {
        self.config.max_parallel
    }
}

/// Offline provider backed by [`mock_complete`].
#[derive(Debug, Clone, Copy)]
pub struct MockCompleter {
    pub max_parallel: usize,
}

impl Default for MockCompleter {
    fn default() -> Self {
        Self { max_parallel: 8 }
    }
}

#[async_trait]
impl Completer for MockCompleter {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        Ok(mock_complete(&request.prompt, request.seed))
    }

    fn max_parallel(&self) -> usize {
        self.max_parallel
    }
}

const DESCRIPTION_CUE: &str = "Example Message Description:";
const CODE_LINE: &str = "Example Code:";
const PROMPT_LINE: &str = "Prompt:";

/// Deterministic stand-in for an LLM. Prompts ending with the stage-1 cue get
/// a one-line message description built around the last `Example Code:`
/// line; anything else gets a portal-style message built from the bundled
/// fragments and the last `Prompt:` line. Output always ends with a blank
/// line and the sentinel.
pub fn mock_complete(prompt: &str, seed: u64) -> Completion {
    let key = Fnv1a::default()
        .write_field(&seed.to_le_bytes())
        .write_field(prompt.as_bytes())
        .finish();
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let body = if prompt.trim_end().ends_with(DESCRIPTION_CUE) {
        mock_description(prompt, &mut rng)
    } else {
        mock_message(prompt, &mut rng)
    };
    let body = body.replace(DEFAULT_SENTINEL, "");
    Completion {
        text: format!("{}\n\n{DEFAULT_SENTINEL}", body.trim()),
        finish_reason: FinishReason::Stop,
    }
}

fn last_line_value<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    prompt
        .lines()
        .rev()
        .filter_map(|l| l.trim_start().strip_prefix(marker))
        .map(str::trim)
        .find(|v| !v.is_empty())
}

fn mock_description(prompt: &str, rng: &mut ChaCha8Rng) -> String {
    let condition = last_line_value(prompt, CODE_LINE)
        .map(str::to_lowercase)
        .unwrap_or_else(|| "a chronic condition".to_string());
    let situation = fixtures::PROMPT_SITUATIONS.choose(rng).expect("non-empty");
    let detail = fixtures::PROMPT_DETAILS.choose(rng).expect("non-empty");
    format!("{}{detail}", situation.replacen("{}", &condition, 1))
}

/// Rewrites a third-person prompt ("Patient is worried that their ...") in
/// the first person, word by word. Verbs are only changed right after a
/// first-person subject or a conjunction.
fn first_person(prompt: &str) -> String {
    let mut out: Vec<String> = Vec::new();
    let mut prev = String::new();
    for (i, word) in prompt.split(' ').enumerate() {
        let core_len = word.trim_end_matches(|c: char| !c.is_alphanumeric()).len();
        let (core, tail) = word.split_at(core_len);
        let lower = core.to_lowercase();
        let after_subject = matches!(prev.as_str(), "i" | "and" | "or");
        let mapped = match lower.as_str() {
            "patient" if i == 0 || core == "Patient" => "I".to_string(),
            "they" => "I".to_string(),
            "them" => "me".to_string(),
            "their" => "my".to_string(),
            "theirs" => "mine".to_string(),
            "themselves" => "myself".to_string(),
            "is" | "are" if after_subject => "am".to_string(),
            "has" if after_subject => "have".to_string(),
            "does" if after_subject => "do".to_string(),
            "worries" if after_subject => "worry".to_string(),
            "asks" | "wants" | "needs" | "mentions" | "notices" | "reports" | "says" | "feels" | "thinks"
            | "wonders" | "hopes" | "requests"
                if after_subject =>
            {
                lower[..lower.len() - 1].to_string()
            }
            _ => core.to_string(),
        };
        let mapped = if mapped != core && mapped != "I" && core.starts_with(char::is_uppercase) {
            let mut chars = mapped.chars();
            chars
                .next()
                .map_or_else(String::new, |c| c.to_uppercase().chain(chars).collect())
        } else {
            mapped
        };
        prev = mapped.to_lowercase();
        out.push(format!("{mapped}{tail}"));
    }
    out.join(" ")
}

fn mock_message(prompt: &str, rng: &mut ChaCha8Rng) -> String {
    let greeting = fixtures::GREETINGS.choose(rng).expect("non-empty");
    let opener = fixtures::OPENERS.choose(rng).expect("non-empty");
    let n_body = rng.random_range(2..=4);
    let body: Vec<&str> = fixtures::BODY_SENTENCES.choose_multiple(rng, n_body).copied().collect();
    let closing = fixtures::CLOSINGS.choose(rng).expect("non-empty");

    let mut text = format!("{greeting}\n\n{opener}");
    if let Some(target) = last_line_value(prompt, PROMPT_LINE) {
        text.push(' ');
        text.push_str(&first_person(target));
    }
    // split the body into one or two paragraphs
    let split = rng.random_range(1..=body.len());
    text.push(' ');
    text.push_str(&body[..split].join(" "));
    if split < body.len() {
        text.push_str("\n\n");
        text.push_str(&body[split..].join(" "));
    }
    text.push_str("\n\n");
    text.push_str(closing);
    text
}
