use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fingerprint, finish_reply, AgentReply, AgentRequest, Backend, BackendError, Termination};

/// One line of a script file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub fingerprint: String,
    pub reply: String,
}

impl ScriptEntry {
    pub fn for_prompt(prompt: &str, reply: impl Into<String>) -> Self {
        Self {
            fingerprint: fingerprint(prompt),
            reply: reply.into(),
        }
    }
}

/// Replays fixed replies keyed by prompt fingerprint. Read-only after
/// construction, so concurrent callers never contend.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    script: HashMap<String, String>,
}

impl ScriptedBackend {
    pub fn new(script: HashMap<String, String>) -> Self {
        Self { script }
    }

    /// Later entries with the same fingerprint replace earlier ones.
    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        Self {
            script: entries.into_iter().map(|e| (e.fingerprint, e.reply)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path).map_err(|e| BackendError::BackendUnavailable {
            status: None,
            attempts: 0,
            message: format!("cannot read script {}: {e}", path.display()),
        })?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line)
                .map_err(|e| BackendError::MalformedUpstreamResponse(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }
}

impl Backend for ScriptedBackend {
    fn generate(&self, req: &AgentRequest) -> Result<AgentReply, BackendError> {
        req.validate()?;
        let fp = req.fingerprint();
        let raw = self.script.get(&fp).ok_or_else(|| BackendError::BackendUnavailable {
            status: None,
            attempts: 1,
            message: format!("no scripted reply for prompt {fp}"),
        })?;
        finish_reply(raw, &req.stop, Termination::Length)
    }
}
