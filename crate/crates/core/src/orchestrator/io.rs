//! Trace JSONL files and replay scripts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InferenceTrace, PipelineError};
use crate::backend::{AgentRequest, ScriptEntry};
use crate::grammar::{parse_locator_body, write_steps, AgentKind, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorRecord {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureRecord {
    pub instruction: String,
    pub error: ErrorRecord,
}

impl FailureRecord {
    pub fn new(instruction: &str, e: &PipelineError) -> Self {
        Self {
            instruction: instruction.to_string(),
            error: ErrorRecord {
                stage: e.stage.as_str().to_string(),
                kind: e.cause.kind().to_string(),
                message: e.cause.to_string(),
            },
        }
    }
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceRecord {
    Trace(Box<InferenceTrace>),
    Failure(FailureRecord),
}

impl TraceRecord {
    pub fn from_result(instruction: &str, r: Result<InferenceTrace, PipelineError>) -> Self {
        match r {
            Ok(t) => TraceRecord::Trace(Box::new(t)),
            Err(e) => TraceRecord::Failure(FailureRecord::new(instruction, &e)),
        }
    }

    pub fn instruction(&self) -> &str {
        match self {
            TraceRecord::Trace(t) => &t.instruction,
            TraceRecord::Failure(f) => &f.instruction,
        }
    }
}

pub fn write_traces(path: &Path, records: &[TraceRecord]) -> std::io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a trace file; errors carry the 1-based line number.
pub fn read_traces(path: &Path) -> Result<Vec<TraceRecord>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1)))
        .collect()
}

/// Script entries that make a scripted backend reproduce `trajectory` for
/// `instruction`. Each generated section is keyed by the prompt the pipeline
/// would send for it; the Generator prompt follows the relevance branch.
pub fn replay_script(instruction: &str, trajectory: &Trajectory) -> Vec<ScriptEntry> {
    let steps = trajectory.steps();
    let with_facts = trajectory
        .step(AgentKind::Locator)
        .and_then(|s| parse_locator_body(&s.body).ok())
        .is_some_and(|js| js.iter().any(|j| j.is_relevant()));
    let mut out = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        if !step.kind.is_generated() {
            continue;
        }
        let prior = if step.kind == AgentKind::Generator && !with_facts {
            String::new()
        } else {
            write_steps(&steps[..i])
        };
        let prompt = AgentRequest::new(instruction, prior, step.kind).prompt();
        out.push(ScriptEntry::for_prompt(
            &prompt,
            format!("{}\n{}", step.body, step.kind.end()),
        ));
    }
    out
}
