//! Chat-completion gateway.
//!
//! Three transports share one contract: `Live` calls a provider, `Replay`
//! answers strictly from a cassette and never touches the network, and
//! `Record` answers from the cassette when it can and otherwise calls the
//! provider and appends the exchange. Requests are matched by
//! [`fingerprint`].

mod cassette;
mod http;
mod limits;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteEntry, CASSETTE_VERSION};
pub use http::{HttpChatProvider, API_BASE_ENV, API_KEY_ENV, DEFAULT_API_BASE};
pub use limits::{InflightLimit, RateLimiter, RetryPolicy, Sleeper, ThreadSleeper};

/// Prefix mixed into every fingerprint; bump when the canonical form changes.
pub const FINGERPRINT_VERSION: &str = "synthex-chat-v1";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider rejected the request: {0}")]
    Rejected(String),
    #[error("no cassette entry for request {fingerprint}")]
    CassetteMiss { fingerprint: String },
    #[error("cassette: {0}")]
    Cassette(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Provider-level failure; only `Transient` is retried.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProviderError {
    Transient(String),
    Fatal(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    /// Temperature 0, 1024 output tokens.
    pub fn new(model: &str, system: &str, user: &str) -> Self {
        ChatRequest {
            model: model.to_string(),
            system: system.to_string(),
            user: user.to_string(),
            temperature: 0.0,
            max_output_tokens: 1024,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.model.trim().is_empty() || self.system.trim().is_empty() || self.user.trim().is_empty() {
            return Err(LlmError::InvalidRequest("model, system and user text must be non-empty".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!("temperature {} must be ≥ 0", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ChatResponse {
    pub fn text(text: &str, prompt_tokens: u64, completion_tokens: u64) -> Self {
        ChatResponse { text: text.to_string(), prompt_tokens, completion_tokens, metadata: BTreeMap::new() }
    }
}

/// Canonical preimage: the version prefix, a newline, then the request as
/// compact JSON with lexicographically sorted keys.
pub fn canonical_form(req: &ChatRequest) -> String {
    let value = serde_json::to_value(req).expect("request serialization is infallible");
    // Sort explicitly rather than rely on serde_json's map representation.
    let sorted: BTreeMap<String, serde_json::Value> =
        value.as_object().expect("request is an object").clone().into_iter().collect();
    format!("{FINGERPRINT_VERSION}\n{}", serde_json::to_string(&sorted).expect("infallible"))
}

/// Lowercase hex SHA-256 of [`canonical_form`].
pub fn fingerprint(req: &ChatRequest) -> String {
    hex::encode(Sha256::digest(canonical_form(req).as_bytes()))
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError>;
}

/// Cumulative token usage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub requests: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl UsageLedger {
    pub fn record(&mut self, resp: &ChatResponse) {
        self.requests += 1;
        self.prompt_tokens += resp.prompt_tokens;
        self.completion_tokens += resp.completion_tokens;
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    /// Cost at a single price per million tokens.
    pub fn cost(&self, price_per_million: f64) -> f64 {
        self.total_tokens() as f64 * price_per_million / 1e6
    }

    /// Cost with separate prompt and completion prices per million tokens.
    pub fn cost_split(&self, prompt_price: f64, completion_price: f64) -> f64 {
        (self.prompt_tokens as f64 * prompt_price + self.completion_tokens as f64 * completion_price) / 1e6
    }
}

pub enum Transport {
    Live(Box<dyn ChatProvider>),
    Replay(Cassette),
    Record { provider: Box<dyn ChatProvider>, cassette: Mutex<Cassette> },
}

impl Transport {
    pub fn mode(&self) -> &'static str {
        match self {
            Transport::Live(_) => "live",
            Transport::Replay(_) => "replay",
            Transport::Record { .. } => "record",
        }
    }
}

/// Thread-safe gateway with retries, rate limiting, an in-flight bound and
/// a usage ledger.
pub struct Gateway {
    transport: Transport,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
    inflight: InflightLimit,
    ledger: Mutex<UsageLedger>,
    sleeper: Arc<dyn Sleeper>,
}

impl Gateway {
    pub fn new(transport: Transport) -> Self {
        Gateway {
            transport,
            retry: RetryPolicy::default(),
            limiter: None,
            inflight: InflightLimit::new(8),
            ledger: Mutex::new(UsageLedger::default()),
            sleeper: Arc::new(ThreadSleeper),
        }
    }

    pub fn live(provider: impl ChatProvider + 'static) -> Self {
        Self::new(Transport::Live(Box::new(provider)))
    }

    pub fn replay(cassette: Cassette) -> Self {
        Self::new(Transport::Replay(cassette))
    }

    pub fn record(provider: impl ChatProvider + 'static, cassette: Cassette) -> Self {
        Self::new(Transport::Record { provider: Box::new(provider), cassette: Mutex::new(cassette) })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: f64) -> Self {
        self.limiter = Some(RateLimiter::per_minute(requests_per_minute));
        self
    }

    pub fn with_max_inflight(mut self, n: usize) -> Self {
        self.inflight = InflightLimit::new(n);
        self
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn mode(&self) -> &'static str {
        self.transport.mode()
    }

    pub fn ledger(&self) -> UsageLedger {
        *self.ledger.lock().expect("ledger poisoned")
    }

    /// Snapshot of the cassette in record mode (for saving).
    pub fn cassette(&self) -> Option<Cassette> {
        match &self.transport {
            Transport::Replay(c) => Some(c.clone()),
            Transport::Record { cassette, .. } => Some(cassette.lock().expect("cassette poisoned").clone()),
            Transport::Live(_) => None,
        }
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let resp = match &self.transport {
            Transport::Replay(cassette) => {
                let fp = fingerprint(req);
                cassette.lookup(&fp).cloned().ok_or(LlmError::CassetteMiss { fingerprint: fp })?
            }
            Transport::Live(provider) => self.call(provider.as_ref(), req)?,
            Transport::Record { provider, cassette } => {
                let fp = fingerprint(req);
                let hit = cassette.lock().expect("cassette poisoned").lookup(&fp).cloned();
                match hit {
                    Some(r) => r,
                    None => {
                        let r = self.call(provider.as_ref(), req)?;
                        cassette.lock().expect("cassette poisoned").insert(req.clone(), r.clone())?;
                        r
                    }
                }
            }
        };
        self.ledger.lock().expect("ledger poisoned").record(&resp);
        Ok(resp)
    }

    fn call(&self, provider: &dyn ChatProvider, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let _permit = self.inflight.acquire();
        let mut delays = self.retry.delays();
        let mut attempts = 0;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire(self.sleeper.as_ref());
            }
            attempts += 1;
            match provider.complete(req) {
                Ok(r) => return Ok(r),
                Err(ProviderError::Fatal(m)) => return Err(LlmError::Rejected(m)),
                Err(ProviderError::Transient(message)) => match delays.next() {
                    Some(d) => self.sleeper.sleep(d),
                    None => return Err(LlmError::Transport { attempts, message }),
                },
            }
        }
    }
}

/// Provider returning a fixed sequence of outcomes, then repeating the last.
pub struct ScriptedProvider {
    script: Mutex<Vec<Result<ChatResponse, ProviderError>>>,
    calls: Mutex<Vec<ChatRequest>>,
}

impl ScriptedProvider {
    pub fn new(script: Vec<Result<ChatResponse, ProviderError>>) -> Self {
        assert!(!script.is_empty(), "script needs at least one outcome");
        let mut script = script;
        script.reverse();
        ScriptedProvider { script: Mutex::new(script), calls: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().unwrap().clone()
    }
}

impl ChatProvider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        self.calls.lock().unwrap().push(req.clone());
        let mut script = self.script.lock().unwrap();
        if script.len() > 1 {
            script.pop().unwrap()
        } else {
            script[0].clone()
        }
    }
}

/// Provider backed by a closure; handy for deterministic oracles.
pub struct FnProvider<F>(pub F);

impl<F> ChatProvider for FnProvider<F>
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, ProviderError> + Send + Sync,
{
    fn name(&self) -> &str {
        "fn"
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (self.0)(req)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        (**self).complete(req)
    }
}

/// Sleeper that only records requested delays.
#[derive(Default)]
pub struct RecordingSleeper(pub Mutex<Vec<Duration>>);

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.0.lock().unwrap().push(d);
    }
}
