use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub total_tokens: Option<u64>,
}

/// One request/response pair, kept verbatim for staff review. The raw
/// request is the JSON body only; headers (and so credentials) are never
/// recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub id: Uuid,
    pub prompt_digest: String,
    pub raw_request: serde_json::Value,
    pub raw_response: String,
    pub latency_ms: u64,
    pub usage: Option<Usage>,
    pub backend_id: String,
    pub timestamp: DateTime<Utc>,
}

/// Append-only destination for exchanges. Appends are serialized.
pub trait ExchangeSink: Send + Sync {
    fn append(&self, exchange: &LlmExchange) -> Result<(), LlmError>;
}

/// One JSON object per line.
pub struct JsonlSink {
    path: PathBuf,
    lock: Mutex<()>,
}

impl JsonlSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn read_all(path: &Path) -> Result<Vec<LlmExchange>, LlmError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(LlmError::ExchangeLog(e.to_string())),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| LlmError::ExchangeLog(e.to_string())))
            .collect()
    }
}

impl ExchangeSink for JsonlSink {
    fn append(&self, exchange: &LlmExchange) -> Result<(), LlmError> {
        let mut line =
            serde_json::to_string(exchange).map_err(|e| LlmError::ExchangeLog(e.to_string()))?;
        line.push('\n');
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| LlmError::ExchangeLog(format!("{}: {e}", self.path.display())))?;
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| LlmError::ExchangeLog(e.to_string()))
    }
}

#[derive(Default)]
pub struct MemorySink {
    exchanges: Mutex<Vec<LlmExchange>>,
}

impl MemorySink {
    pub fn snapshot(&self) -> Vec<LlmExchange> {
        self.exchanges
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }
}

impl ExchangeSink for MemorySink {
    fn append(&self, exchange: &LlmExchange) -> Result<(), LlmError> {
        self.exchanges
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(exchange.clone());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(digest: &str) -> LlmExchange {
        LlmExchange {
            id: Uuid::new_v4(),
            prompt_digest: digest.into(),
            raw_request: serde_json::json!({"model": "m"}),
            raw_response: "ok".into(),
            latency_ms: 3,
            usage: None,
            backend_id: "mock".into(),
            timestamp: Utc::now(),
        }
    }

    #[test]
    fn jsonl_appends_and_reads_back() {
        let dir = std::env::temp_dir().join(format!("erd-mentor-sink-{}", Uuid::new_v4()));
        std::fs::create_dir_all(&dir).unwrap();
        let sink = JsonlSink::new(dir.join("exchanges.jsonl"));
        let (a, b) = (sample("a"), sample("b"));
        sink.append(&a).unwrap();
        sink.append(&b).unwrap();
        assert_eq!(JsonlSink::read_all(sink.path()).unwrap(), vec![a, b]);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn missing_log_reads_empty() {
        let path = std::env::temp_dir().join(format!("absent-{}.jsonl", Uuid::new_v4()));
        assert!(JsonlSink::read_all(&path).unwrap().is_empty());
    }
}
