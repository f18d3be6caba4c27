//! Batch-ranking capability and its implementations.
//!
//! A [`BatchRanker`] receives a small keyed batch of documents and returns the
//! keys ordered from most to least relevant. [`LlmRanker`] asks a chat model
//! to do it; [`OracleRanker`] sorts by a known ground truth, optionally with
//! injected noise, and is what the simulations and tests use.

mod oracle;
mod prompt;
mod remote;
mod repair;

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use rand::distr::Alphanumeric;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{oracle_rank, NoiseKind, NoiseModel, OracleRanker};
pub use prompt::{build_prompt, ChatPrompt, DOCUMENTS_BEGIN, DOCUMENTS_END};
pub use remote::{ChatClient, Completion, LlmRanker, RemoteConfig, TextModel, DEFAULT_API_KEY_ENV, DEFAULT_BASE_URL};
pub use repair::{parse_and_repair, repair_keys};

/// Default length of the opaque per-batch keys.
pub const KEY_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchEntry<'a> {
    pub key: String,
    /// Corpus id. Only the oracle looks at it; it never reaches a prompt.
    pub id: &'a str,
    pub text: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchRequest<'a> {
    pub query: &'a str,
    pub entries: Vec<BatchEntry<'a>>,
    /// Zero for the first attempt.
    pub attempt: u32,
}

impl<'a> BatchRequest<'a> {
    pub fn keys(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.key.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BatchOrdering {
    /// Most relevant first.
    pub ordered_keys: Vec<String>,
    pub reasoning: Option<String>,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, Error)]
pub enum RankerError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("model output contains none of the batch keys: {raw:?}")]
    Unrepairable { raw: String },
    #[error("document `{0}` is not in the ground truth")]
    UnknownDocument(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("ranker configuration: {0}")]
    Config(String),
}

impl RankerError {
    /// Transport failures, throttling, server errors and unrepairable output
    /// are worth another attempt; everything else is not.
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Transport(_) | Self::Unrepairable { .. } | Self::Malformed(_) => true,
            Self::Status { status, .. } => *status == 429 || *status == 408 || *status >= 500,
            Self::Auth { .. } | Self::UnknownDocument(_) | Self::Config(_) => false,
        }
    }
}

/// The `L(B, q)` capability. Implementations must tolerate concurrent calls.
pub trait BatchRanker: Send + Sync {
    fn rank_batch(&self, request: &BatchRequest<'_>) -> Result<BatchOrdering, RankerError>;

    /// Pause before retry number `attempt` (1-based).
    fn retry_delay(&self, _attempt: u32) -> Duration {
        Duration::ZERO
    }
}

impl<R: BatchRanker + ?Sized> BatchRanker for &R {
    fn rank_batch(&self, request: &BatchRequest<'_>) -> Result<BatchOrdering, RankerError> {
        (**self).rank_batch(request)
    }

    fn retry_delay(&self, attempt: u32) -> Duration {
        (**self).retry_delay(attempt)
    }
}

impl<R: BatchRanker + ?Sized> BatchRanker for Box<R> {
    fn rank_batch(&self, request: &BatchRequest<'_>) -> Result<BatchOrdering, RankerError> {
        (**self).rank_batch(request)
    }

    fn retry_delay(&self, attempt: u32) -> Duration {
        (**self).retry_delay(attempt)
    }
}

/// `count` distinct random alphanumeric keys of length `len`.
pub fn generate_keys<R: Rng + ?Sized>(rng: &mut R, count: usize, len: usize) -> Vec<String> {
    let mut keys: Vec<String> = Vec::with_capacity(count);
    while keys.len() < count {
        let key: String = (0..len).map(|_| rng.sample(Alphanumeric) as char).collect();
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub requests: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::Add for UsageTotals {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            requests: self.requests + rhs.requests,
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

/// Thread-safe request and token counters.
#[derive(Debug, Default)]
pub struct UsageLedger {
    requests: AtomicU64,
    input_tokens: AtomicU64,
    output_tokens: AtomicU64,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_request(&self) {
        self.requests.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_usage(&self, usage: TokenUsage) {
        self.input_tokens.fetch_add(usage.input_tokens, Ordering::Relaxed);
        self.output_tokens.fetch_add(usage.output_tokens, Ordering::Relaxed);
    }

    pub fn totals(&self) -> UsageTotals {
        UsageTotals {
            requests: self.requests.load(Ordering::Relaxed),
            input_tokens: self.input_tokens.load(Ordering::Relaxed),
            output_tokens: self.output_tokens.load(Ordering::Relaxed),
        }
    }
}
