use std::sync::Arc;
use std::time::Instant;

use async_trait::async_trait;
use chrono::Utc;
use erd_mentor_core::prompt::{PromptText, ResponseError};
use rand::RngExt;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use uuid::Uuid;

use crate::config::backoff_delay;
use crate::exchange::{ExchangeSink, LlmExchange, Usage};
use crate::{LlmConfig, LlmError};

/// A successful backend round trip.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub text: String,
    /// Request body as sent (no headers).
    pub raw_request: serde_json::Value,
    pub raw_response: String,
    pub usage: Option<Usage>,
}

/// Why a single backend call failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SendError {
    Timeout,
    /// Connection refused, reset, DNS failure and the like.
    Transport(String),
    Status {
        status: u16,
        body: String,
    },
    /// The backend answered but the reply is unusable; not retried.
    Invalid(String),
}

#[async_trait]
pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    async fn send(
        &self,
        prompt: &PromptText,
        config: &LlmConfig,
    ) -> Result<BackendReply, SendError>;
}

/// Chat-completion request body shared by every backend.
pub(crate) fn request_body(prompt: &PromptText, config: &LlmConfig) -> serde_json::Value {
    serde_json::json!({
        "model": config.model,
        "messages": [{ "role": "user", "content": prompt.body }],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    })
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub text: String,
    pub exchange: LlmExchange,
}

#[derive(Debug, Clone)]
pub struct Structured<T> {
    pub value: T,
    /// One per model call, in order; the last produced `value`.
    pub exchanges: Vec<LlmExchange>,
}

/// A reply that could not be parsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub prompt_digest: String,
    pub text: String,
    pub error: String,
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    config: LlmConfig,
    permits: Arc<Semaphore>,
    sink: Option<Arc<dyn ExchangeSink>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        Ok(Self {
            backend,
            permits: Arc::new(Semaphore::new(config.max_concurrency)),
            config,
            sink: None,
        })
    }

    pub fn with_sink(mut self, sink: Arc<dyn ExchangeSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    /// One completion, retrying transport failures, timeouts, 429 and 5xx
    /// with exponential backoff.
    pub async fn complete(&self, prompt: &PromptText) -> Result<Completion, LlmError> {
        let base = std::time::Duration::from_millis(self.config.backoff_base_ms);
        let mut retry = 0;
        loop {
            let started = Instant::now();
            let result = {
                let _permit = self
                    .permits
                    .acquire()
                    .await
                    .expect("semaphore never closed");
                match tokio::time::timeout(
                    self.config.timeout(),
                    self.backend.send(prompt, &self.config),
                )
                .await
                {
                    Ok(r) => r,
                    Err(_) => Err(SendError::Timeout),
                }
            };
            let latency_ms = started.elapsed().as_millis() as u64;

            let failure = match result {
                Ok(reply) => return self.record(prompt, reply, latency_ms),
                Err(e) => e,
            };
            let (error, retryable) = self.classify(failure, retry + 1);
            tracing::warn!(
                digest = %prompt.input_digest,
                attempt = retry + 1,
                error = %error,
                "LLM call failed"
            );
            if !retryable || retry >= self.config.max_retries {
                return Err(error);
            }
            let jitter = rand::rng().random_range(0.0..0.5);
            tokio::time::sleep(backoff_delay(base, retry, jitter)).await;
            retry += 1;
        }
    }

    fn classify(&self, failure: SendError, attempts: u32) -> (LlmError, bool) {
        match failure {
            SendError::Timeout => (LlmError::Timeout(self.config.timeout_secs), true),
            SendError::Transport(msg) => (
                LlmError::BackendError {
                    status: None,
                    body: msg,
                },
                true,
            ),
            SendError::Status {
                status: status @ (401 | 403),
                ..
            } => (LlmError::AuthFailure { status }, false),
            SendError::Status { status: 429, .. } => (LlmError::RateLimited { attempts }, true),
            SendError::Status { status, body } => (
                LlmError::BackendError {
                    status: Some(status),
                    body,
                },
                status >= 500,
            ),
            SendError::Invalid(body) => (LlmError::BackendError { status: None, body }, false),
        }
    }

    fn record(
        &self,
        prompt: &PromptText,
        reply: BackendReply,
        latency_ms: u64,
    ) -> Result<Completion, LlmError> {
        let exchange = LlmExchange {
            id: Uuid::new_v4(),
            prompt_digest: prompt.input_digest.clone(),
            raw_request: reply.raw_request,
            raw_response: reply.raw_response,
            latency_ms,
            usage: reply.usage,
            backend_id: self.backend.id(),
            timestamp: Utc::now(),
        };
        if let Some(sink) = &self.sink {
            sink.append(&exchange)?;
        }
        Ok(Completion {
            text: reply.text,
            exchange,
        })
    }

    /// Complete and parse; on an unusable reply, re-ask with the corrective
    /// instruction appended, up to `max_retries` more times.
    pub async fn complete_structured<T, F>(
        &self,
        prompt: &PromptText,
        parse: F,
    ) -> Result<Structured<T>, LlmError>
    where
        F: Fn(&str) -> Result<T, ResponseError>,
    {
        let mut exchanges = Vec::new();
        let mut attempts = Vec::new();
        for attempt in 0..=self.config.max_retries as usize {
            let current = if attempt == 0 {
                prompt.clone()
            } else {
                prompt.with_correction(attempt)
            };
            let completion = self.complete(&current).await?;
            exchanges.push(completion.exchange);
            match parse(&completion.text) {
                Ok(value) => return Ok(Structured { value, exchanges }),
                Err(e) => {
                    tracing::warn!(kind = %prompt.kind, attempt = attempt + 1, error = %e, "unusable model reply");
                    attempts.push(Attempt {
                        prompt_digest: current.input_digest,
                        text: completion.text,
                        error: e.to_string(),
                    });
                }
            }
        }
        Err(LlmError::StructuredOutputFailure {
            attempts,
            exchanges,
        })
    }
}
