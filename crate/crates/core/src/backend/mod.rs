//! Text generation behind the Reconstructor, Locator and Generator agents.
//!
//! All three agents share one backend; a request differs only in the prior
//! trajectory and the head token it asks the model to continue from.

mod http;
mod scripted;
pub mod stub;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grammar::{AgentKind, TokenKind};

pub use http::{BackendConfig, HttpBackend};
pub use scripted::{ScriptEntry, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    BackendUnavailable {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("backend returned an empty continuation")]
    EmptyGeneration,
    #[error("malformed upstream response: {0}")]
    MalformedUpstreamResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// One generation call: continue `prompt()` until an end token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub instruction: String,
    /// Serialized trajectory so far.
    pub prior_trajectory: String,
    pub head: TokenKind,
    pub stop: Vec<String>,
}

impl AgentRequest {
    /// Request for `agent`'s section. The stop list holds every end token,
    /// the agent's own first.
    pub fn new(instruction: impl Into<String>, prior_trajectory: impl Into<String>, agent: AgentKind) -> Self {
        let mut stop = vec![agent.end().as_str().to_string()];
        stop.extend(
            AgentKind::ALL
                .into_iter()
                .filter(|a| *a != agent)
                .map(|a| a.end().as_str().to_string()),
        );
        Self {
            instruction: instruction.into(),
            prior_trajectory: prior_trajectory.into(),
            head: agent.head(),
            stop,
        }
    }

    pub fn agent(&self) -> Option<AgentKind> {
        self.head.head_of()
    }

    pub fn validate(&self) -> Result<AgentKind, BackendError> {
        let agent = self
            .agent()
            .ok_or_else(|| BackendError::InvalidRequest(format!("{} is not a head token", self.head)))?;
        if !self.stop.iter().any(|s| s == agent.end().as_str()) {
            return Err(BackendError::InvalidRequest(format!("stop list lacks {}", agent.end())));
        }
        Ok(agent)
    }

    /// `instruction</eoi>\n` + prior trajectory + `head\n`.
    pub fn prompt(&self) -> String {
        format!(
            "{}{}\n{}{}\n",
            self.instruction,
            TokenKind::InstructionEnd,
            self.prior_trajectory,
            self.head
        )
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.prompt())
    }
}

/// Hex SHA-256 of the exact prompt text.
pub fn fingerprint(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Why generation stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// A stop string fired (the string is recorded).
    Stop(String),
    /// The output length limit was reached.
    Length,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentReply {
    pub body: String,
    pub terminated_by: Termination,
}

/// Cuts a raw continuation at the first stop string or end token.
pub fn finish_reply(raw: &str, stop: &[String], fallback: Termination) -> Result<AgentReply, BackendError> {
    let ends = AgentKind::ALL.map(|a| a.end().as_str());
    let cut = stop
        .iter()
        .map(String::as_str)
        .chain(ends)
        .filter(|s| !s.is_empty())
        .filter_map(|s| raw.find(s).map(|at| (at, s)))
        .min_by_key(|(at, _)| *at);
    let (body, terminated_by) = match cut {
        Some((at, s)) => (&raw[..at], Termination::Stop(s.to_string())),
        None => (raw, fallback),
    };
    if body.trim().is_empty() {
        return Err(BackendError::EmptyGeneration);
    }
    Ok(AgentReply {
        body: body.to_string(),
        terminated_by,
    })
}

/// A text generator shared by all agents.
pub trait Backend: Send + Sync {
    fn generate(&self, req: &AgentRequest) -> Result<AgentReply, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn generate(&self, req: &AgentRequest) -> Result<AgentReply, BackendError> {
        (**self).generate(req)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn generate(&self, req: &AgentRequest) -> Result<AgentReply, BackendError> {
        (**self).generate(req)
    }
}

/// Backend driven by a closure returning the raw continuation.
pub struct FnBackend<F>(pub F);

impl<F> Backend for FnBackend<F>
where
    F: Fn(&AgentRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn generate(&self, req: &AgentRequest) -> Result<AgentReply, BackendError> {
        req.validate()?;
        let raw = (self.0)(req)?;
        finish_reply(&raw, &req.stop, Termination::Length)
    }
}

/// Wraps a backend and keeps every request it forwards.
pub struct RecordingBackend<B> {
    inner: B,
    requests: Mutex<Vec<AgentRequest>>,
}

impl<B> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<AgentRequest> {
        self.requests.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn take_requests(&self) -> Vec<AgentRequest> {
        std::mem::take(&mut *self.requests.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn generate(&self, req: &AgentRequest) -> Result<AgentReply, BackendError> {
        self.requests
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(req.clone());
        self.inner.generate(req)
    }
}
