//! OpenAI-compatible chat-completions client and the LLM-backed ranker.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompt::{build_prompt, ChatPrompt};
use super::repair::{first_json_object, parse_and_repair};
use super::{BatchOrdering, BatchRanker, BatchRequest, RankerError, TokenUsage, UsageLedger};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_API_KEY_ENV: &str = "OPENAI_API_KEY";

/// A chat model that turns a prompt into text.
pub trait TextModel: Send + Sync {
    fn complete(&self, prompt: &ChatPrompt) -> Result<Completion, RankerError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

impl<M: TextModel + ?Sized> TextModel for &M {
    fn complete(&self, prompt: &ChatPrompt) -> Result<Completion, RankerError> {
        (**self).complete(prompt)
    }
}

impl<M: TextModel + ?Sized> TextModel for std::sync::Arc<M> {
    fn complete(&self, prompt: &ChatPrompt) -> Result<Completion, RankerError> {
        (**self).complete(prompt)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f32>,
    /// Passed through as `reasoning_effort` when set (e.g. `minimal`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_effort: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
    pub timeout: Duration,
    pub backoff_base: Duration,
    pub backoff_max: Duration,
    /// Client-side throttle; `None` disables it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_second: Option<f64>,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key: api_key.into(),
            temperature: None,
            reasoning_effort: None,
            max_output_tokens: None,
            timeout: Duration::from_secs(120),
            backoff_base: Duration::from_millis(500),
            backoff_max: Duration::from_secs(30),
            requests_per_second: None,
        }
    }

    /// Read the API key from the environment variable `api_key_env`.
    pub fn from_env(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key_env: &str,
    ) -> Result<Self, RankerError> {
        let key = std::env::var(api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| RankerError::Config(format!("environment variable {api_key_env} is not set")))?;
        Ok(Self::new(base_url, model, key))
    }
}

#[derive(Debug)]
struct TokenBucket {
    rate: f64,
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    fn new(rate: f64) -> Self {
        let capacity = rate.max(1.0);
        Self {
            rate,
            capacity,
            tokens: capacity,
            last: Instant::now(),
        }
    }

    /// Take one token, or report how long until one is available.
    fn try_take(&mut self) -> Result<(), Duration> {
        let now = Instant::now();
        self.tokens = (self.tokens + now.duration_since(self.last).as_secs_f64() * self.rate).min(self.capacity);
        self.last = now;
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - self.tokens) / self.rate))
        }
    }
}

/// Blocking client for `POST {base_url}/chat/completions`.
pub struct ChatClient {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
    bucket: Option<Mutex<TokenBucket>>,
    ledger: UsageLedger,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl ChatClient {
    pub fn new(config: RemoteConfig) -> Result<Self, RankerError> {
        if config.model.trim().is_empty() {
            return Err(RankerError::Config("model name is empty".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| RankerError::Config(e.to_string()))?;
        let bucket = match config.requests_per_second {
            Some(r) if r > 0.0 => Some(Mutex::new(TokenBucket::new(r))),
            Some(r) => return Err(RankerError::Config(format!("requests per second must be positive, got {r}"))),
            None => None,
        };
        Ok(Self {
            config,
            http,
            bucket,
            ledger: UsageLedger::new(),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// Lifetime totals for everything sent through this client.
    pub fn ledger(&self) -> &UsageLedger {
        &self.ledger
    }

    /// Cheap credential probe against `GET {base_url}/models`.
    ///
    /// Only a 401/403 counts as failure; servers without a models endpoint
    /// are given the benefit of the doubt.
    pub fn check_auth(&self) -> Result<(), RankerError> {
        let resp = self
            .http
            .get(format!("{}/models", self.config.base_url))
            .bearer_auth(&self.config.api_key)
            .send()
            .map_err(|e| RankerError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            let body = resp.text().unwrap_or_default();
            return Err(RankerError::Auth { status, body });
        }
        Ok(())
    }

    fn throttle(&self) {
        let Some(bucket) = &self.bucket else { return };
        loop {
            let wait = match bucket.lock().expect("bucket lock").try_take() {
                Ok(()) => return,
                Err(wait) => wait,
            };
            std::thread::sleep(wait);
        }
    }

    fn request_body(&self, prompt: &ChatPrompt) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        });
        let obj = body.as_object_mut().expect("object literal");
        if let Some(t) = self.config.temperature {
            obj.insert("temperature".into(), json!(t));
        }
        if let Some(effort) = &self.config.reasoning_effort {
            obj.insert("reasoning_effort".into(), json!(effort));
        }
        if let Some(max) = self.config.max_output_tokens {
            obj.insert("max_completion_tokens".into(), json!(max));
        }
        body
    }
}

impl TextModel for ChatClient {
    fn complete(&self, prompt: &ChatPrompt) -> Result<Completion, RankerError> {
        self.throttle();
        self.ledger.record_request();
        let resp = self
            .http
            .post(format!("{}/chat/completions", self.config.base_url))
            .bearer_auth(&self.config.api_key)
            .json(&self.request_body(prompt))
            .send()
            .map_err(|e| RankerError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| RankerError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(RankerError::Auth { status, body }),
            _ => return Err(RankerError::Status { status, body }),
        }
        let parsed: ChatResponse =
            serde_json::from_str(&body).map_err(|e| RankerError::Malformed(format!("{e}: {body}")))?;
        let usage = parsed
            .usage
            .map(|u| TokenUsage {
                input_tokens: u.prompt_tokens,
                output_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        self.ledger.record_usage(usage);
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| RankerError::Malformed(format!("no message content: {body}")))?;
        Ok(Completion { text, usage })
    }
}

/// Ranks batches by prompting a chat model and repairing its answer.
pub struct LlmRanker<M> {
    model: M,
    capture_reasoning: bool,
    backoff_base: Duration,
    backoff_max: Duration,
}

impl<M: TextModel> LlmRanker<M> {
    pub fn new(model: M) -> Self {
        Self {
            model,
            capture_reasoning: false,
            backoff_base: Duration::from_millis(500),
            backoff_max: Duration::from_secs(30),
        }
    }

    pub fn with_reasoning(mut self, capture: bool) -> Self {
        self.capture_reasoning = capture;
        self
    }

    pub fn with_backoff(mut self, base: Duration, max: Duration) -> Self {
        self.backoff_base = base;
        self.backoff_max = max;
        self
    }

    pub fn model(&self) -> &M {
        &self.model
    }
}

impl LlmRanker<ChatClient> {
    pub fn remote(config: RemoteConfig) -> Result<Self, RankerError> {
        let (base, max) = (config.backoff_base, config.backoff_max);
        Ok(Self::new(ChatClient::new(config)?).with_backoff(base, max))
    }
}

impl<M: TextModel> BatchRanker for LlmRanker<M> {
    fn rank_batch(&self, request: &BatchRequest<'_>) -> Result<BatchOrdering, RankerError> {
        let prompt = build_prompt(request, self.capture_reasoning);
        let completion = self.model.complete(&prompt)?;
        let ordered_keys = parse_and_repair(&completion.text, &request.keys())?;
        let reasoning = if self.capture_reasoning {
            first_json_object(&completion.text)
                .and_then(|v| v.get("reasoning").and_then(|r| r.as_str()).map(str::to_string))
        } else {
            None
        };
        Ok(BatchOrdering {
            ordered_keys,
            reasoning,
            usage: completion.usage,
        })
    }

    fn retry_delay(&self, attempt: u32) -> Duration {
        if attempt == 0 {
            return Duration::ZERO;
        }
        let factor = 1u32.checked_shl(attempt - 1).unwrap_or(u32::MAX);
        self.backoff_base.saturating_mul(factor).min(self.backoff_max)
    }
}
