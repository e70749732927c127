//! Uniform completion interface with response caching, retries and
//! bounded concurrency.

mod cache;
mod fixture;
mod remote;
pub mod scripted;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheEntry, CacheStats, ResponseCache};
pub use fixture::{FixtureProvider, RecordingProvider};
pub use remote::{MessageRole, RemoteConfig, RemoteProvider, API_KEY_ENV};
pub use scripted::ScriptedProvider;

use crate::json::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProviderId {
    #[serde(rename = "remote-openai-compatible")]
    RemoteOpenAiCompatible,
    #[serde(rename = "fixture")]
    Fixture,
    #[serde(rename = "scripted")]
    Scripted,
}

impl ProviderId {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderId::RemoteOpenAiCompatible => "remote-openai-compatible",
            ProviderId::Fixture => "fixture",
            ProviderId::Scripted => "scripted",
        }
    }
}

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProviderId {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remote-openai-compatible" | "remote" => Ok(ProviderId::RemoteOpenAiCompatible),
            "fixture" => Ok(ProviderId::Fixture),
            "scripted" => Ok(ProviderId::Scripted),
            other => Err(LlmError::InvalidRequest(format!(
                "unknown provider `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model_id: String,
    pub temperature: f64,
    pub seed: u64,
    pub max_output: u32,
}

impl CompletionRequest {
    pub fn prompt_digest(&self) -> String {
        prompt_digest(&self.prompt)
    }

    fn validate(&self) -> Result<(), LlmError> {
        if self.prompt.is_empty() {
            return Err(LlmError::InvalidRequest("empty prompt".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Hex SHA-256 of the prompt text; names fixture files.
pub fn prompt_digest(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no fixture for prompt digest {digest}")]
    FixtureMiss { digest: String },
    #[error("remote provider failed after {attempts} attempts (last status {}): {message}", status_text(*last_status))]
    RetriesExhausted {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("remote provider returned HTTP {status}: {message}")]
    Remote { status: u16, message: String },
    #[error("environment variable {0} is not set")]
    MissingCredentials(&'static str),
    #[error("scripted provider: {0}")]
    UnrecognizedMarker(String),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("cache {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture store {path}: {source}")]
    Fixture {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn status_text(status: Option<u16>) -> String {
    status.map_or_else(|| "none".to_string(), |s| s.to_string())
}

/// Failure of a single provider call. Transient failures are retried.
#[derive(Debug)]
pub enum ProviderError {
    Transient {
        status: Option<u16>,
        message: String,
    },
    Permanent(LlmError),
}

impl From<LlmError> for ProviderError {
    fn from(e: LlmError) -> Self {
        ProviderError::Permanent(e)
    }
}

pub trait Provider: Send + Sync {
    fn id(&self) -> ProviderId;
    fn call(&self, req: &CompletionRequest) -> Result<String, ProviderError>;

    /// Whether calls should pass through the remote concurrency gate.
    fn is_remote(&self) -> bool {
        false
    }
}

/// Counting semaphore bounding simultaneous work.
#[derive(Debug)]
pub struct Gate {
    limit: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    gate: &'a Gate,
}

impl Gate {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_use.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit { gate: self }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.gate.in_use.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.gate.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(
            self.base_delay_ms
                .saturating_mul(factor)
                .min(self.max_delay_ms),
        )
    }
}

#[derive(Debug, Default)]
struct Counters {
    provider_calls: AtomicU64,
    cache_hits: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GateStats {
    pub provider_calls: u64,
    pub cache_hits: u64,
}

/// Cache-first completion front end over one provider.
pub struct LlmGate {
    provider: Arc<dyn Provider>,
    cache: ResponseCache,
    retry: RetryPolicy,
    remote_gate: Gate,
    counters: Counters,
}

impl LlmGate {
    pub fn new(provider: Arc<dyn Provider>, cache: ResponseCache) -> Self {
        Self {
            provider,
            cache,
            retry: RetryPolicy::default(),
            remote_gate: Gate::new(4),
            counters: Counters::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.remote_gate = Gate::new(limit);
        self
    }

    pub fn provider_id(&self) -> ProviderId {
        self.provider.id()
    }

    pub fn stats(&self) -> GateStats {
        GateStats {
            provider_calls: self.counters.provider_calls.load(Ordering::Relaxed),
            cache_hits: self.counters.cache_hits.load(Ordering::Relaxed),
        }
    }

    pub fn cache_key(&self, req: &CompletionRequest) -> String {
        cache_key(self.provider.id(), req)
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        req.validate()?;
        let key = self.cache_key(req);
        if let Some(hit) = self.cache.get(&key)? {
            self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }
        let response = self.call_with_retries(req)?;
        self.cache.put(&key, &response)?;
        Ok(response)
    }

    fn call_with_retries(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let mut attempt = 0;
        loop {
            self.counters.provider_calls.fetch_add(1, Ordering::Relaxed);
            let result = if self.provider.is_remote() {
                let _permit = self.remote_gate.acquire();
                self.provider.call(req)
            } else {
                self.provider.call(req)
            };
            match result {
                Ok(text) => return Ok(text),
                Err(ProviderError::Permanent(e)) => return Err(e),
                Err(ProviderError::Transient { status, message }) => {
                    if attempt >= self.retry.max_retries {
                        return Err(LlmError::RetriesExhausted {
                            attempts: attempt + 1,
                            last_status: status,
                            message,
                        });
                    }
                    thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

/// Cache key over provider, model, seed, temperature and prompt digest.
/// Fields are length-prefixed so no two distinct tuples share a preimage.
pub fn cache_key(provider: ProviderId, req: &CompletionRequest) -> String {
    let fields = [
        provider.as_str().to_string(),
        req.model_id.clone(),
        req.seed.to_string(),
        format!("{:016x}", req.temperature.to_bits()),
        req.prompt_digest(),
    ];
    let mut pre = String::from("vichara-cache-v1");
    for f in &fields {
        pre.push('\n');
        pre.push_str(&f.len().to_string());
        pre.push(':');
        pre.push_str(f);
    }
    sha256_hex(pre.as_bytes())
}
