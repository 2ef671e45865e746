//! Provider-agnostic chat completion with retries, per-task settings,
//! bounded concurrency and per-task token accounting.

pub mod mock;
pub mod openai;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTag {
    Gloss,
    Triples,
    TitleCheck,
    McqForward,
    McqReverse,
    Validate,
}

impl TaskTag {
    pub const ALL: [TaskTag; 6] = [
        TaskTag::Gloss,
        TaskTag::Triples,
        TaskTag::TitleCheck,
        TaskTag::McqForward,
        TaskTag::McqReverse,
        TaskTag::Validate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskTag::Gloss => "gloss",
            TaskTag::Triples => "triples",
            TaskTag::TitleCheck => "title_check",
            TaskTag::McqForward => "mcq_forward",
            TaskTag::McqReverse => "mcq_reverse",
            TaskTag::Validate => "validate",
        }
    }
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub task_tag: TaskTag,
}

impl ChatRequest {
    /// Builds a request with the temperature and token limit bound to `tag`.
    pub fn for_task(tag: TaskTag, config: &PipelineConfig, system: String, user: String) -> Self {
        let (temperature, max_tokens) = match tag {
            TaskTag::Gloss => (config.temp_desc, None),
            TaskTag::Triples => (config.temp_triples, Some(config.max_tokens_triples)),
            TaskTag::TitleCheck => (config.temp_title_check, Some(5)),
            TaskTag::McqForward | TaskTag::McqReverse => (config.temp_mcq, None),
            TaskTag::Validate => (config.temp_validate, Some(100)),
        };
        ChatRequest { system_prompt: system, user_prompt: user, temperature, max_tokens, task_tag: tag }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Failure reported by a single backend attempt.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transient failure: {0}")]
    Transient(String),
    #[error("request failed: {0}")]
    Fatal(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("backend returned an empty response for {0}")]
    Empty(TaskTag),
    #[error("request failed: {0}")]
    Fatal(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub calls: u64,
    pub prompt: u64,
    pub completion: u64,
}

impl TokenCount {
    pub fn total(&self) -> u64 {
        self.prompt + self.completion
    }
}

/// Cumulative token usage keyed by task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenLedger {
    pub per_task: BTreeMap<TaskTag, TokenCount>,
}

impl TokenLedger {
    pub fn totals(&self) -> (u64, u64) {
        self.per_task
            .values()
            .fold((0, 0), |(p, c), t| (p + t.prompt, c + t.completion))
    }

    pub fn tags(&self) -> Vec<TaskTag> {
        self.per_task.iter().filter(|(_, c)| c.calls > 0).map(|(t, _)| *t).collect()
    }

    /// Total tokens divided by the number of kept items.
    pub fn per_item(&self, kept: usize) -> Option<f64> {
        if kept == 0 {
            return None;
        }
        let (p, c) = self.totals();
        Some((p + c) as f64 / kept as f64)
    }
}

/// Counting semaphore bounding in-flight requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot wait");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Shared front door to a chat backend.
pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    ledger: Mutex<TokenLedger>,
    slots: Slots,
    max_attempts: u32,
    base_backoff: Duration,
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>, max_inflight: usize, max_attempts: u32) -> Self {
        Gateway {
            backend,
            ledger: Mutex::new(TokenLedger::default()),
            slots: Slots { free: Mutex::new(max_inflight.max(1)), cv: Condvar::new() },
            max_attempts: max_attempts.max(1),
            base_backoff: Duration::from_millis(500),
        }
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.base_backoff = base;
        self
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if !(0.0..=1.0).contains(&request.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                request.temperature
            )));
        }
        let _slot = self.slots.acquire();
        let mut last = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt));
            }
            match self.backend.complete(request) {
                Ok(resp) => {
                    self.record(request.task_tag, &resp);
                    if resp.text.trim().is_empty() {
                        return Err(GatewayError::Empty(request.task_tag));
                    }
                    return Ok(resp);
                }
                Err(BackendError::Auth(msg)) => return Err(GatewayError::Auth(msg)),
                Err(BackendError::Fatal(msg)) => return Err(GatewayError::Fatal(msg)),
                Err(BackendError::Transient(msg)) => {
                    log::warn!("{} attempt {} failed: {msg}", request.task_tag, attempt + 1);
                    last = msg;
                }
            }
        }
        Err(GatewayError::Exhausted { attempts: self.max_attempts, last })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let exp = self.base_backoff.saturating_mul(1 << (attempt - 1).min(10));
        let jitter = rand::rng().random_range(0.5..1.5);
        exp.mul_f64(jitter)
    }

    fn record(&self, tag: TaskTag, resp: &ChatResponse) {
        let mut ledger = self.ledger.lock().expect("ledger lock");
        let entry = ledger.per_task.entry(tag).or_default();
        entry.calls += 1;
        entry.prompt += resp.prompt_tokens;
        entry.completion += resp.completion_tokens;
    }

    pub fn token_ledger(&self) -> TokenLedger {
        self.ledger.lock().expect("ledger lock").clone()
    }

    pub fn reset_ledger(&self) {
        *self.ledger.lock().expect("ledger lock") = TokenLedger::default();
    }
}
