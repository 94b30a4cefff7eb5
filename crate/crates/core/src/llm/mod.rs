//! Chat-completion client with request pacing, bounded retry on rate-limit
//! errors, and token accounting.
//!
//! The client is generic over a [`ChatTransport`] (the HTTP endpoint or the
//! scripted [`MockTransport`]) and a [`Clock`], so pacing can be checked
//! deterministically with a [`ManualClock`].

mod http;
mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpConfig, HttpTransport};
pub use mock::{MockFixture, MockTransport, ScriptedResponse, TransportCall};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LlmError {
    #[error("rate limited on all {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

impl Usage {
    pub fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        Self { prompt_tokens, completion_tokens, total_tokens: prompt_tokens + completion_tokens }
    }

    /// Fallback when a provider omits usage: one token per four characters.
    pub fn estimate(prompt: &str, completion: &str) -> Self {
        Self::new(estimate_tokens(prompt), estimate_tokens(completion))
    }
}

impl std::ops::Add for Usage {
    type Output = Usage;

    fn add(self, rhs: Usage) -> Usage {
        Usage::new(self.prompt_tokens + rhs.prompt_tokens, self.completion_tokens + rhs.completion_tokens)
    }
}

impl std::iter::Sum for Usage {
    fn sum<I: Iterator<Item = Usage>>(iter: I) -> Usage {
        iter.fold(Usage::default(), |a, b| a + b)
    }
}

pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Component-wise sum of per-response usage.
pub fn run_token_totals(responses: &[Usage]) -> Usage {
    responses.iter().copied().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Usage,
    pub usage_estimated: bool,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientPolicy {
    /// Minimum gap between the starts of consecutive requests.
    pub rate_limit_ms: u64,
    /// Total tries per logical request when the provider answers 429.
    pub nr_attempts: u32,
}

impl Default for ClientPolicy {
    fn default() -> Self {
        Self { rate_limit_ms: 0, nr_attempts: 3 }
    }
}

/// What a transport got back for one network call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCompletion {
    pub content: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    RateLimited,
    Transport(String),
    Malformed(String),
}

pub trait ChatTransport: Send {
    fn send(&mut self, req: &ChatRequest) -> Result<RawCompletion, TransportFailure>;
}

impl<T: ChatTransport + ?Sized> ChatTransport for Box<T> {
    fn send(&mut self, req: &ChatRequest) -> Result<RawCompletion, TransportFailure> {
        (**self).send(req)
    }
}

/// Millisecond clock used for pacing.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
    fn sleep_ms(&self, ms: u64);
}

#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }

    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }
}

/// Virtual clock: sleeping advances time instantly.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: AtomicU64,
}

impl ManualClock {
    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep_ms(&self, ms: u64) {
        self.advance(ms);
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now_ms(&self) -> u64 {
        (**self).now_ms()
    }

    fn sleep_ms(&self, ms: u64) {
        (**self).sleep_ms(ms)
    }
}

/// One client per run; requests go out one at a time.
pub struct LlmClient<T, C> {
    transport: T,
    clock: C,
    last_start: Option<u64>,
    network_calls: u64,
}

impl<T: ChatTransport, C: Clock> LlmClient<T, C> {
    pub fn new(transport: T, clock: C) -> Self {
        Self { transport, clock, last_start: None, network_calls: 0 }
    }

    pub fn network_calls(&self) -> u64 {
        self.network_calls
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn pace(&mut self, rate_limit_ms: u64) {
        if let Some(last) = self.last_start {
            let next = last + rate_limit_ms;
            let now = self.clock.now_ms();
            if now < next {
                self.clock.sleep_ms(next - now);
            }
        }
        self.last_start = Some(self.clock.now_ms());
    }

    pub fn complete(&mut self, req: &ChatRequest, policy: &ClientPolicy) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let attempts = policy.nr_attempts.max(1);
        for attempt in 1..=attempts {
            self.pace(policy.rate_limit_ms);
            let started = self.clock.now_ms();
            self.network_calls += 1;
            match self.transport.send(req) {
                Ok(raw) => {
                    let latency_ms = self.clock.now_ms().saturating_sub(started);
                    let (usage, usage_estimated) = match raw.usage {
                        Some(u) => (Usage::new(u.prompt_tokens, u.completion_tokens), false),
                        None => {
                            let prompt = format!("{}{}", req.system_text, req.user_text);
                            (Usage::estimate(&prompt, &raw.content), true)
                        }
                    };
                    return Ok(ChatResponse { content: raw.content, usage, usage_estimated, latency_ms, attempts: attempt });
                }
                Err(TransportFailure::RateLimited) => {
                    log::debug!("rate limited on attempt {attempt}/{attempts}");
                }
                Err(TransportFailure::Transport(msg)) => return Err(LlmError::Transport(msg)),
                Err(TransportFailure::Malformed(msg)) => return Err(LlmError::MalformedResponse(msg)),
            }
        }
        Err(LlmError::RateLimited { attempts })
    }
}
