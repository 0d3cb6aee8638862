use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{LlmMode, LlmSettings, SecretKey};

/// Lower-case hex SHA-256 of the prompt; names replay fixtures.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallAttempt {
    pub attempt: u32,
    pub elapsed_ms: u64,
    pub error: Option<String>,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("live LLM mode needs LLM_API_KEY")]
    MissingAuthKey,
    #[error("no replay fixture for prompt {hash}")]
    FixtureMiss { hash: String },
    #[error("LLM unavailable after {} attempts", attempts.len())]
    LlmUnavailable { attempts: Vec<CallAttempt> },
    #[error("LLM request rejected: {0}")]
    Rejected(String),
    #[error("replay fixture unreadable: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmResponse {
    pub text: String,
    pub attempts: Vec<CallAttempt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Timeouts, connection failures and 5xx answers; worth retrying.
    Retryable(String),
    Fatal(String),
}

/// One POST of `{"model", "prompt"}`, answering with the `text` field.
pub trait Transport: Send + Sync {
    fn post(&self, body: &serde_json::Value, key: &SecretKey, timeout: Duration) -> Result<String, TransportError>;
}

pub struct HttpTransport {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(endpoint: &str) -> Self {
        HttpTransport {
            endpoint: endpoint.to_string(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    text: String,
}

impl Transport for HttpTransport {
    fn post(&self, body: &serde_json::Value, key: &SecretKey, timeout: Duration) -> Result<String, TransportError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(key.expose())
            .json(body)
            .timeout(timeout)
            .send()
            .map_err(|e| TransportError::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(TransportError::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::Fatal(format!("HTTP {status}")));
        }
        resp.json::<CompletionBody>()
            .map(|b| b.text)
            .map_err(|e| TransportError::Fatal(format!("bad response body: {e}")))
    }
}

/// Counting semaphore bounding concurrent live requests.
struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().expect("in-flight lock");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("in-flight lock");
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("in-flight lock") -= 1;
        self.0.freed.notify_one();
    }
}

enum Backend {
    Live {
        transport: Arc<dyn Transport>,
        key: Option<SecretKey>,
        in_flight: InFlight,
    },
    Replay(PathBuf),
    Refusal,
}

pub const REFUSAL_TEXT: &str = "I cannot help with that.";

/// Completion client shared across worker threads.
pub struct LlmClient {
    backend: Backend,
    settings: LlmSettings,
}

impl LlmClient {
    pub fn from_settings(settings: &LlmSettings, key: Option<SecretKey>) -> Self {
        match &settings.mode {
            LlmMode::Live => {
                Self::with_transport(settings, key, Arc::new(HttpTransport::new(&settings.endpoint)))
            }
            LlmMode::Replay { dir } => LlmClient {
                backend: Backend::Replay(dir.clone()),
                settings: settings.clone(),
            },
            LlmMode::Refusal => LlmClient {
                backend: Backend::Refusal,
                settings: settings.clone(),
            },
        }
    }

    /// Live client over a caller-supplied transport.
    pub fn with_transport(settings: &LlmSettings, key: Option<SecretKey>, transport: Arc<dyn Transport>) -> Self {
        LlmClient {
            backend: Backend::Live {
                transport,
                key,
                in_flight: InFlight {
                    count: Mutex::new(0),
                    freed: Condvar::new(),
                    cap: settings.max_in_flight.max(1),
                },
            },
            settings: settings.clone(),
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self.backend {
            Backend::Live { .. } => "live",
            Backend::Replay(_) => "replay",
            Backend::Refusal => "refusal",
        }
    }

    pub fn complete(&self, prompt: &str) -> Result<LlmResponse, LlmError> {
        match &self.backend {
            Backend::Refusal => Ok(LlmResponse {
                text: REFUSAL_TEXT.to_string(),
                attempts: vec![],
            }),
            Backend::Replay(dir) => {
                let hash = prompt_hash(prompt);
                let path = dir.join(format!("{hash}.txt"));
                match std::fs::read(&path) {
                    Ok(bytes) => Ok(LlmResponse {
                        text: String::from_utf8_lossy(&bytes).into_owned(),
                        attempts: vec![],
                    }),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(LlmError::FixtureMiss { hash }),
                    Err(e) => Err(e.into()),
                }
            }
            Backend::Live { transport, key, in_flight } => {
                let key = key.as_ref().ok_or(LlmError::MissingAuthKey)?;
                let body = serde_json::json!({ "model": self.settings.model, "prompt": prompt });
                let timeout = Duration::from_millis(self.settings.timeout_ms);
                let mut attempts = Vec::new();
                for n in 1..=self.settings.max_attempts {
                    let started = Instant::now();
                    let result = {
                        let _slot = in_flight.acquire();
                        transport.post(&body, key, timeout)
                    };
                    let elapsed_ms = started.elapsed().as_millis() as u64;
                    match result {
                        Ok(text) => {
                            attempts.push(CallAttempt { attempt: n, elapsed_ms, error: None });
                            return Ok(LlmResponse { text, attempts });
                        }
                        Err(TransportError::Fatal(msg)) => {
                            tracing::warn!(attempt = n, error = %msg, "LLM request rejected");
                            return Err(LlmError::Rejected(msg));
                        }
                        Err(TransportError::Retryable(msg)) => {
                            tracing::warn!(attempt = n, error = %msg, "LLM request failed");
                            attempts.push(CallAttempt { attempt: n, elapsed_ms, error: Some(msg) });
                            if n < self.settings.max_attempts {
                                let idx = (n as usize - 1).min(self.settings.backoff_ms.len().saturating_sub(1));
                                let wait = self.settings.backoff_ms.get(idx).copied().unwrap_or(0);
                                std::thread::sleep(Duration::from_millis(wait));
                            }
                        }
                    }
                }
                Err(LlmError::LlmUnavailable { attempts })
            }
        }
    }
}
