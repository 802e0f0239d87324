use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::LlmError;

pub const ENV_ENDPOINT: &str = "ERD_MENTOR_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "ERD_MENTOR_LLM_MODEL";
pub const ENV_KEY_VAR: &str = "ERD_MENTOR_LLM_KEY_VAR";

const DEFAULT_MODEL: &str = "gpt-4";

/// Backend settings. The API key is referenced by environment variable name
/// and only read when the HTTP backend is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    /// Base URL; requests go to `{endpoint}/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Name of the environment variable holding the API key.
    pub api_key_var: Option<String>,
    /// First backoff delay; doubles on every retry.
    pub backoff_base_ms: u64,
    pub max_concurrency: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1".into(),
            model: DEFAULT_MODEL.into(),
            temperature: 0.2,
            max_tokens: 1024,
            timeout_secs: 60,
            max_retries: 2,
            api_key_var: None,
            backoff_base_ms: 1000,
            max_concurrency: 4,
        }
    }
}

impl LlmConfig {
    /// Defaults overridden by `ERD_MENTOR_LLM_ENDPOINT`, `ERD_MENTOR_LLM_MODEL`
    /// and `ERD_MENTOR_LLM_KEY_VAR`.
    pub fn from_env() -> Result<Self, LlmError> {
        let mut config = Self::default();
        if let Ok(endpoint) = std::env::var(ENV_ENDPOINT) {
            config.endpoint = endpoint;
        }
        if let Ok(model) = std::env::var(ENV_MODEL) {
            config.model = model;
        }
        if let Ok(var) = std::env::var(ENV_KEY_VAR) {
            config.api_key_var = Some(var).filter(|v| !v.is_empty());
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |msg: String| Err(LlmError::InvalidConfig(msg));
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.timeout_secs == 0 {
            return bad("timeout must be positive".into());
        }
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be at least 1".into());
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        match reqwest::Url::parse(&self.endpoint) {
            Ok(url) if matches!(url.scheme(), "http" | "https") => {}
            Ok(url) => return bad(format!("unsupported endpoint scheme '{}'", url.scheme())),
            Err(e) => return bad(format!("invalid endpoint '{}': {e}", self.endpoint)),
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.endpoint.trim_end_matches('/'))
    }
}

/// Delay before retry number `retry` (0-based): `base * 2^retry` plus a
/// jitter of up to `jitter_fraction` of that amount.
pub fn backoff_delay(base: Duration, retry: u32, jitter_fraction: f64) -> Duration {
    let nominal = base.saturating_mul(1u32 << retry.min(16));
    nominal + nominal.mul_f64(jitter_fraction.clamp(0.0, 1.0))
}
