use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use erd_mentor_core::prompt::PromptText;
use serde::{Deserialize, Serialize};

use crate::gateway::{request_body, Backend, BackendReply, SendError};
use crate::{LlmConfig, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    Timeout,
    RateLimited,
    Auth,
    Server,
    Transport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Failure { error: MockFailure },
}

/// Scripted replies keyed by prompt digest, by prompt kind (`matching`,
/// `feedback`, `faq`) or by the `*` wildcard, looked up in that order. Each
/// key replays its list in order and then repeats the last entry.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript {
    pub entries: BTreeMap<String, Vec<MockReply>>,
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let script: MockScript =
            serde_json::from_str(text).map_err(|e| LlmError::MockScript(e.to_string()))?;
        if let Some((key, _)) = script.entries.iter().find(|(_, v)| v.is_empty()) {
            return Err(LlmError::MockScript(format!("key '{key}' has no replies")));
        }
        Ok(script)
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::MockScript(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn with(mut self, key: impl Into<String>, replies: Vec<MockReply>) -> Self {
        self.entries.insert(key.into(), replies);
        self
    }

    pub fn texts(key: impl Into<String>, replies: &[&str]) -> Self {
        Self::default().with(
            key,
            replies
                .iter()
                .map(|r| MockReply::Text(r.to_string()))
                .collect(),
        )
    }

    fn key_for(&self, prompt: &PromptText) -> Option<&str> {
        [prompt.input_digest.as_str(), prompt.kind.as_str(), "*"]
            .into_iter()
            .find_map(|k| self.entries.get_key_value(k).map(|(k, _)| k.as_str()))
    }

    /// The reply for `prompt` on its key's `index`-th call.
    pub fn reply(&self, prompt: &PromptText, index: usize) -> Option<&MockReply> {
        let list = &self.entries[self.key_for(prompt)?];
        list.get(index).or_else(|| list.last())
    }
}

pub struct MockBackend {
    script: MockScript,
    calls: Mutex<HashMap<String, usize>>,
    delay: Option<Duration>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    total: AtomicUsize,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            calls: Mutex::new(HashMap::new()),
            delay: None,
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            total: AtomicUsize::new(0),
        }
    }

    /// Hold every call for `delay` before answering.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn calls(&self) -> usize {
        self.total.load(Ordering::SeqCst)
    }

    /// Most calls ever in progress at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl Backend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    async fn send(
        &self,
        prompt: &PromptText,
        config: &LlmConfig,
    ) -> Result<BackendReply, SendError> {
        self.total.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if let Some(d) = self.delay {
            tokio::time::sleep(d).await;
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);

        let Some(key) = self.script.key_for(prompt) else {
            return Err(SendError::Invalid(format!(
                "mock script has no reply for {} prompt {}",
                prompt.kind, prompt.input_digest
            )));
        };
        let index = {
            let mut calls = self.calls.lock().unwrap_or_else(|p| p.into_inner());
            let n = calls.entry(key.to_string()).or_insert(0);
            *n += 1;
            *n - 1
        };
        match self.script.reply(prompt, index).expect("key exists") {
            MockReply::Text(text) => Ok(BackendReply {
                text: text.clone(),
                raw_request: request_body(prompt, config),
                raw_response: text.clone(),
                usage: None,
            }),
            MockReply::Failure { error } => Err(match error {
                MockFailure::Timeout => SendError::Timeout,
                MockFailure::RateLimited => SendError::Status {
                    status: 429,
                    body: "scripted rate limit".into(),
                },
                MockFailure::Auth => SendError::Status {
                    status: 401,
                    body: "scripted auth failure".into(),
                },
                MockFailure::Server => SendError::Status {
                    status: 503,
                    body: "scripted server error".into(),
                },
                MockFailure::Transport => SendError::Transport("scripted connection reset".into()),
            }),
        }
    }
}
