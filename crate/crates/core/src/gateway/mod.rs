//! Uniform access to chat-completion backends.
//!
//! A [`Gateway`] wraps one [`ChatBackend`] with bounded retries and a usage
//! ledger. Backends available here:
//!
//! - [`ScriptedBackend`]: ordered first-match script, used by tests and
//!   scripted runs. Never improvises; unmatched prompts are an error.
//! - [`RecordingBackend`] / [`ReplayBackend`]: capture and replay of
//!   request/response pairs keyed by request hash.
//! - `OpenAiBackend` (feature `http`): OpenAI-compatible chat completions.

mod clock;
mod ledger;
mod record;
mod scripted;

#[cfg(feature = "http")]
mod http;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use clock::{Clock, ManualClock, SystemClock};
pub use ledger::{TagUsage, UsageLedger, UsageReport};
pub use record::{RecordedExchange, RecordingBackend, ReplayBackend};
pub use scripted::{Matcher, ScriptEntry, ScriptedBackend};

#[cfg(feature = "http")]
pub(crate) use http::agent as http_agent;
#[cfg(all(test, feature = "http"))]
pub(crate) use http::testserver;
#[cfg(feature = "http")]
pub use http::{OpenAiBackend, OpenAiConfig};

pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Free-form label used for usage accounting and recordings.
    pub tag: String,
}

impl ChatRequest {
    /// A request at temperature 0 with the default token budget.
    pub fn new(tag: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system_prompt: system.into(),
            user_prompt: user.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            tag: tag.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(Error::precondition("chat prompts must be non-empty"));
        }
        if self.max_tokens == 0 {
            return Err(Error::precondition("max_tokens must be at least 1"));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::precondition("temperature must lie in [0, 2]"));
        }
        Ok(())
    }

    /// Content hash of everything that influences the answer. The tag is
    /// excluded so relabelling a call does not invalidate recordings.
    pub fn hash(&self) -> String {
        let canonical = serde_json::json!({
            "system_prompt": self.system_prompt,
            "user_prompt": self.user_prompt,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

impl ChatResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Default::default()
        }
    }
}

/// Outcome of a single backend attempt.
#[derive(Debug)]
pub enum BackendError {
    /// Transport failure or HTTP 5xx. Retried by the gateway.
    Transient(String),
    /// Anything else. Returned to the caller immediately.
    Fatal(Error),
}

impl From<Error> for BackendError {
    fn from(e: Error) -> Self {
        BackendError::Fatal(e)
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, request: &ChatRequest) -> std::result::Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each subsequent retry.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay: Duration::ZERO,
        }
    }

    pub fn delay_before_retry(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry.saturating_sub(1))
    }
}

/// Shared entry point for every LLM call in the pipeline.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    ledger: UsageLedger,
    clock: Arc<dyn Clock>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self::with_retry(backend, RetryPolicy::default())
    }

    pub fn with_retry(backend: Arc<dyn ChatBackend>, retry: RetryPolicy) -> Self {
        Self {
            backend,
            retry,
            ledger: UsageLedger::default(),
            clock: Arc::new(SystemClock::default()),
        }
    }

    /// Times calls with `clock` instead of the system clock.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn scripted(backend: ScriptedBackend) -> Self {
        Self::with_retry(Arc::new(backend), RetryPolicy::none())
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        request.validate()?;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let start = self.clock.now();
            match self.backend.complete(request) {
                Ok(response) => {
                    let wall = self.clock.now().saturating_sub(start);
                    self.ledger.record(&request.tag, &response, wall);
                    log::debug!(
                        "llm call `{}` ok in {} ms ({}+{} tokens)",
                        request.tag,
                        wall.as_millis(),
                        response.prompt_tokens,
                        response.completion_tokens
                    );
                    return Ok(response);
                }
                Err(BackendError::Fatal(e)) => return Err(e),
                Err(BackendError::Transient(message)) => {
                    if attempt > self.retry.max_retries {
                        return Err(Error::BackendUnavailable {
                            attempts: attempt,
                            message,
                        });
                    }
                    let delay = self.retry.delay_before_retry(attempt);
                    log::warn!(
                        "llm call `{}` failed (attempt {attempt}): {message}; retrying in {:?}",
                        request.tag,
                        delay
                    );
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
            }
        }
    }

    /// Convenience wrapper returning only the text.
    pub fn ask(&self, request: &ChatRequest) -> Result<String> {
        self.complete(request).map(|r| r.text)
    }

    pub fn usage_report(&self) -> UsageReport {
        self.ledger.report()
    }

    pub fn reset_usage(&self) {
        self.ledger.reset();
    }
}
