//! Client for an OpenAI-compatible chat-completion endpoint.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::{finish_reply, AgentReply, AgentRequest, Backend, BackendError, Termination};

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub retries: u32,
    pub retry_backoff: Duration,
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            api_key_env: None,
            max_tokens: 512,
            timeout: Duration::from_secs(60),
            retries: 2,
            retry_backoff: Duration::from_millis(250),
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
    temperature: f32,
    max_tokens: u32,
}

/// Counting gate on concurrent requests.
struct InFlight {
    active: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

/// Completion text plus the upstream `finish_reason`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub content: String,
    pub finish_reason: Option<String>,
}

pub struct HttpBackend {
    config: BackendConfig,
    agent: ureq::Agent,
    gate: InFlight,
}

enum Attempt {
    Retryable { status: Option<u16>, message: String },
    Fatal(BackendError),
}

impl HttpBackend {
    /// No connection is made until the first request.
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        if config.timeout.is_zero() {
            return Err(BackendError::InvalidRequest("timeout must be positive".into()));
        }
        if config.max_in_flight == 0 {
            return Err(BackendError::InvalidRequest("max_in_flight must be at least 1".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = InFlight {
            active: Mutex::new(0),
            freed: Condvar::new(),
            limit: config.max_in_flight,
        };
        Ok(Self { config, agent, gate })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Sends `prompt` as a single user message with greedy decoding.
    /// Transport failures, 429 and 5xx are retried `retries` times.
    pub fn chat(&self, prompt: &str, stop: &[String]) -> Result<Completion, BackendError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
            stop,
            temperature: 0.0,
            max_tokens: self.config.max_tokens,
        };
        let key = self
            .config
            .api_key_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok())
            .filter(|k| !k.is_empty());

        let attempts = self.config.retries + 1;
        let mut last_status = None;
        let mut last_message = String::new();
        for attempt in 1..=attempts {
            let outcome = {
                let _slot = self.gate.acquire();
                self.attempt(&body, key.as_deref())
            };
            match outcome {
                Ok(c) => return Ok(c),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable { status, message }) => {
                    log::debug!("attempt {attempt}/{attempts} failed: {message}");
                    last_status = status;
                    last_message = message;
                    if attempt < attempts && !self.config.retry_backoff.is_zero() {
                        thread::sleep(self.config.retry_backoff * attempt);
                    }
                }
            }
        }
        Err(BackendError::BackendUnavailable {
            status: last_status,
            attempts,
            message: last_message,
        })
    }

    fn attempt(&self, body: &ChatRequest<'_>, key: Option<&str>) -> Result<Completion, Attempt> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => {
                return Err(Attempt::Retryable {
                    status: None,
                    message: e.to_string(),
                })
            }
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| Attempt::Retryable {
            status: Some(status),
            message: e.to_string(),
        })?;
        if !(200..300).contains(&status) {
            let message = format!("upstream status {status}: {}", truncate(&text, 200));
            return if status == 429 || status >= 500 {
                Err(Attempt::Retryable {
                    status: Some(status),
                    message,
                })
            } else {
                Err(Attempt::Fatal(BackendError::BackendUnavailable {
                    status: Some(status),
                    attempts: 1,
                    message,
                }))
            };
        }
        parse_completion(&text).map_err(Attempt::Fatal)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Reads `choices[0].message.content` and `choices[0].finish_reason`.
pub fn parse_completion(text: &str) -> Result<Completion, BackendError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| BackendError::MalformedUpstreamResponse(e.to_string()))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::MalformedUpstreamResponse("missing choices[0]".into()))?;
    let content = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::MalformedUpstreamResponse("missing choices[0].message.content".into()))?;
    Ok(Completion {
        content: content.to_string(),
        finish_reason: choice.get("finish_reason").and_then(Value::as_str).map(str::to_string),
    })
}

impl Backend for HttpBackend {
    fn generate(&self, req: &AgentRequest) -> Result<AgentReply, BackendError> {
        let agent = req.validate()?;
        let completion = self.chat(&req.prompt(), &req.stop)?;
        let fallback = match completion.finish_reason.as_deref() {
            Some("length") => Termination::Length,
            _ => Termination::Stop(agent.end().as_str().to_string()),
        };
        finish_reply(&completion.content, &req.stop, fallback)
    }
}
