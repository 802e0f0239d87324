use std::fmt;

use async_trait::async_trait;
use erd_mentor_core::prompt::PromptText;

use crate::exchange::Usage;
use crate::gateway::{request_body, Backend, BackendReply, SendError};
use crate::{LlmConfig, LlmError};

/// `POST {endpoint}/chat/completions` with a single user message.
pub struct HttpBackend {
    client: reqwest::Client,
    api_key: Option<String>,
    model: String,
}

impl fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpBackend")
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpBackend {
    /// Reads the API key from the variable named by `config.api_key_var`.
    pub fn new(config: &LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = match &config.api_key_var {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                LlmError::InvalidConfig(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| LlmError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            client,
            api_key,
            model: config.model.clone(),
        })
    }
}

#[async_trait]
impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.model)
    }

    async fn send(
        &self,
        prompt: &PromptText,
        config: &LlmConfig,
    ) -> Result<BackendReply, SendError> {
        let body = request_body(prompt, config);
        let mut request = self.client.post(config.completions_url()).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().await.map_err(|e| {
            if e.is_timeout() {
                SendError::Timeout
            } else {
                SendError::Transport(e.without_url().to_string())
            }
        })?;
        let status = response.status();
        let raw = response.text().await.map_err(|e| {
            if e.is_timeout() {
                SendError::Timeout
            } else {
                SendError::Transport(e.without_url().to_string())
            }
        })?;
        if !status.is_success() {
            return Err(SendError::Status {
                status: status.as_u16(),
                body: raw,
            });
        }
        let value: serde_json::Value = serde_json::from_str(&raw)
            .map_err(|e| SendError::Invalid(format!("response is not JSON: {e}")))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| SendError::Invalid("response has no choices[0].message.content".into()))?
            .to_string();
        let usage = value.get("usage").map(|u| Usage {
            prompt_tokens: u["prompt_tokens"].as_u64(),
            completion_tokens: u["completion_tokens"].as_u64(),
            total_tokens: u["total_tokens"].as_u64(),
        });
        Ok(BackendReply {
            text,
            raw_request: body,
            raw_response: raw,
            usage,
        })
    }
}
