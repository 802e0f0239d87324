//! Language model gateway: runs prompts against a chat-completion HTTP
//! backend or a scripted mock, with retries, a concurrency cap and an
//! append-only exchange log.

mod config;
mod exchange;
mod gateway;
mod http;
mod mock;

use thiserror::Error;

pub use config::{backoff_delay, LlmConfig, ENV_ENDPOINT, ENV_KEY_VAR, ENV_MODEL};
pub use exchange::{ExchangeSink, JsonlSink, LlmExchange, MemorySink, Usage};
pub use gateway::{Attempt, Backend, BackendReply, Completion, Gateway, SendError, Structured};
pub use http::HttpBackend;
pub use mock::{MockBackend, MockFailure, MockReply, MockScript};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid LLM configuration: {0}")]
    InvalidConfig(String),
    #[error("request timed out after {0}s")]
    Timeout(u64),
    #[error("rate limited by backend (HTTP 429) after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("backend rejected credentials (HTTP {status})")]
    AuthFailure { status: u16 },
    #[error("backend error{}: {body}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    BackendError { status: Option<u16>, body: String },
    #[error("no usable structured output after {} attempt(s)", attempts.len())]
    StructuredOutputFailure {
        attempts: Vec<Attempt>,
        exchanges: Vec<LlmExchange>,
    },
    #[error("mock script: {0}")]
    MockScript(String),
    #[error("exchange log: {0}")]
    ExchangeLog(String),
}

impl LlmError {
    /// Exchanges recorded before the failure, if any.
    pub fn exchanges(&self) -> &[LlmExchange] {
        match self {
            LlmError::StructuredOutputFailure { exchanges, .. } => exchanges,
            _ => &[],
        }
    }
}
