//! Blocking client for an OpenAI-compatible HTTP API.
//!
//! Chat completions carry the coalition's exemplars in ascending manifest
//! order, followed by the question, as one user message. Transient failures
//! (429, 5xx, transport errors) are retried with exponential backoff; 401 and
//! 403 fail immediately as credential errors.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use promptshap_core::Coalition;
use serde::{Deserialize, Serialize};

use crate::cache::{request_digest, ResponseCache};
use crate::error::{Error, Result};
use crate::formats::PromptManifest;

/// The only place the API credential is read from.
pub const API_KEY_ENV: &str = "PROMPTSHAP_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiConfig {
    pub base_url: String,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub embedding_model: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    /// Delay before the first retry; doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Token-bucket refill rate; unlimited when absent.
    #[serde(default)]
    pub requests_per_second: Option<f64>,
}

fn default_max_tokens() -> u32 {
    256
}
fn default_max_attempts() -> u32 {
    5
}
fn default_backoff_ms() -> u64 {
    1000
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_in_flight() -> usize {
    4
}

impl ApiConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            embedding_model: None,
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            max_attempts: default_max_attempts(),
            backoff_base_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
            max_in_flight: default_in_flight(),
            requests_per_second: None,
        }
    }

    fn url(&self, route: &str) -> String {
        format!("{}{route}", self.base_url.trim_end_matches('/'))
    }
}

pub fn api_key_from_env() -> Result<String> {
    match std::env::var(API_KEY_ENV) {
        Ok(k) if !k.trim().is_empty() => Ok(k),
        _ => Err(Error::Credential(format!("{API_KEY_ENV} is not set"))),
    }
}

/// One chat completion, identified by its digest.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub exemplars: Vec<String>,
    pub question: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    /// Exemplars are the coalition's prompts in ascending manifest order.
    pub fn for_coalition(manifest: &PromptManifest, coalition: &Coalition, question: &str, cfg: &ApiConfig) -> Self {
        let exemplars = coalition.members().map(|i| manifest.prompts()[i].text.clone()).collect();
        Self {
            exemplars,
            question: question.to_owned(),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        }
    }

    pub fn digest(&self) -> String {
        request_digest(&self.model, &self.exemplars, &self.question, self.temperature, self.max_tokens)
    }

    /// Exemplars then question, blank-line separated.
    pub fn content(&self) -> String {
        let mut parts: Vec<&str> = self.exemplars.iter().map(String::as_str).collect();
        parts.push(&self.question);
        parts.join("\n\n")
    }

    pub fn payload(&self) -> Vec<u8> {
        let body = ChatBody {
            model: &self.model,
            messages: vec![Message { role: "user", content: self.content() }],
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        serde_json::to_vec(&body).expect("chat payload")
    }
}

#[derive(Serialize)]
struct Message {
    role: &'static str,
    content: String,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: Vec<Message>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

/// Token bucket holding at most one second of burst.
struct RateLimiter {
    rate: Option<f64>,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    fn new(rate: Option<f64>) -> Self {
        let rate = rate.filter(|r| *r > 0.0 && r.is_finite());
        Self { rate, state: Mutex::new((rate.unwrap_or(0.0).max(1.0), Instant::now())) }
    }

    fn acquire(&self) {
        let Some(rate) = self.rate else { return };
        let capacity = rate.max(1.0);
        loop {
            let wait = {
                let mut s = self.state.lock().unwrap();
                let now = Instant::now();
                s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * rate).min(capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                (1.0 - s.0) / rate
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn enter(&self) -> InFlightGuard<'_> {
        let mut n = self.active.lock().unwrap();
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

pub struct ModelClient {
    cfg: ApiConfig,
    api_key: String,
    agent: ureq::Agent,
    limiter: RateLimiter,
    in_flight: InFlight,
    sent: AtomicUsize,
}

impl ModelClient {
    /// Reads the credential from the environment.
    pub fn from_env(cfg: ApiConfig) -> Result<Self> {
        Ok(Self::new(cfg, api_key_from_env()?))
    }

    pub fn new(cfg: ApiConfig, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(Duration::from_secs(cfg.timeout_secs.max(1))))
                .build(),
        );
        let limiter = RateLimiter::new(cfg.requests_per_second);
        let in_flight = InFlight { limit: cfg.max_in_flight.max(1), active: Mutex::new(0), freed: Condvar::new() };
        Self { cfg, api_key: api_key.into(), agent, limiter, in_flight, sent: AtomicUsize::new(0) }
    }

    pub fn config(&self) -> &ApiConfig {
        &self.cfg
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_sent(&self) -> usize {
        self.sent.load(Ordering::SeqCst)
    }

    fn post(&self, route: &str, body: &[u8]) -> Result<String> {
        let url = self.cfg.url(route);
        let attempts = self.cfg.max_attempts.max(1);
        let mut last_status = None;
        let mut last_message = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.cfg.backoff_base_ms.saturating_mul(1u64 << (attempt - 1).min(20));
                std::thread::sleep(Duration::from_millis(delay));
            }
            self.limiter.acquire();
            let _slot = self.in_flight.enter();
            self.sent.fetch_add(1, Ordering::SeqCst);
            let res = self
                .agent
                .post(&url)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .header("Content-Type", "application/json")
                .send(body);
            match res {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.into_body().read_to_string();
                    match status {
                        200..=299 => return text.map_err(|e| Error::Protocol(format!("unreadable response body: {e}"))),
                        401 | 403 => return Err(Error::Credential(format!("{url} rejected the credential ({status})"))),
                        429 | 500..=599 => {
                            last_status = Some(status);
                            last_message = format!("{url} returned {status}");
                        }
                        _ => {
                            let detail = text.unwrap_or_default();
                            return Err(Error::Transport {
                                message: format!("{url} returned {status}: {}", detail.trim()),
                                status: Some(status),
                            });
                        }
                    }
                }
                Err(e) => {
                    last_status = None;
                    last_message = format!("{url}: {e}");
                }
            }
        }
        Err(Error::Transport { message: format!("{last_message} (after {attempts} attempts)"), status: last_status })
    }

    /// Raw completion text, from `cache` when the digest is known.
    pub fn complete(&self, req: &CompletionRequest, cache: &ResponseCache) -> Result<String> {
        let digest = req.digest();
        if let Some(hit) = cache.get(&digest) {
            return Ok(hit);
        }
        let text = self.post("/v1/chat/completions", &req.payload())?;
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("malformed completion response: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Error::Protocol("completion response has no message content".into()))?;
        Ok(cache.insert(digest, content))
    }

    /// One vector per input text, in input order. Duplicate texts are sent once.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut unique: Vec<String> = Vec::new();
        let mut slot = Vec::with_capacity(texts.len());
        for t in texts {
            match unique.iter().position(|u| u == t) {
                Some(i) => slot.push(i),
                None => {
                    slot.push(unique.len());
                    unique.push(t.clone());
                }
            }
        }
        if unique.is_empty() {
            return Ok(Vec::new());
        }
        let model = self.cfg.embedding_model.as_deref().unwrap_or(&self.cfg.model);
        let body = serde_json::to_vec(&EmbedBody { model, input: &unique }).expect("embedding payload");
        let text = self.post("/v1/embeddings", &body)?;
        let parsed: EmbedResponse =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("malformed embeddings response: {e}")))?;
        if parsed.data.len() != unique.len() {
            return Err(Error::Protocol(format!("{} embeddings for {} inputs", parsed.data.len(), unique.len())));
        }
        let mut vectors: Vec<Option<Vec<f64>>> = vec![None; unique.len()];
        for (pos, d) in parsed.data.into_iter().enumerate() {
            let i = d.index.unwrap_or(pos);
            if i >= vectors.len() || vectors[i].is_some() {
                return Err(Error::Protocol(format!("bad embedding index {i}")));
            }
            vectors[i] = Some(d.embedding);
        }
        let vectors: Vec<Vec<f64>> = vectors.into_iter().map(|v| v.expect("all slots filled")).collect();
        let dim = vectors[0].len();
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Protocol("embedding dimensions differ across responses".into()));
        }
        Ok(slot.into_iter().map(|i| vectors[i].clone()).collect())
    }

    pub fn embed_matrix(
        &self,
        ids: Vec<String>,
        texts: &[String],
        unit_norm: bool,
    ) -> Result<promptshap_core::learn::EmbeddingMatrix> {
        let m = promptshap_core::learn::EmbeddingMatrix::new(ids, self.embed(texts)?)?;
        Ok(if unit_norm { m.normalized() } else { m })
    }
}
