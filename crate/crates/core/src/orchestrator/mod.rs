//! Runs the four agent steps for one instruction and records what happened.
//!
//! Control flow is fixed: reconstruct intents, retrieve, locate facts,
//! generate. The Generator sees the full trajectory when at least one
//! passage was judged relevant and only the instruction otherwise.

mod io;
mod run;
mod validate;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::grammar::{
    parse_trajectory, AgentKind, CitationList, GrammarError, IntentSet, LocatorJudgment, TokenKind, Trajectory,
};
use crate::retrieval::{Passage, RetrievalError};

pub use io::{read_traces, replay_script, write_traces, ErrorRecord, FailureRecord, TraceRecord};
pub use run::{run_batch, run_inference};
pub use validate::{validate_trace, Violation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Passages retrieved per intent.
    pub k: usize,
    pub max_intents: usize,
    /// Cap on the merged passage list; lowest-ranked passages go first.
    pub max_passages: usize,
    /// When false, a malformed Locator reply degrades to instruction-only
    /// generation instead of failing the item.
    pub locator_required: bool,
    /// Allow instruction-only generation when no passage is relevant.
    pub generator_fallback: bool,
    /// Items processed at once by `run_batch`.
    pub concurrency: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            k: 3,
            max_intents: 4,
            max_passages: 12,
            locator_required: true,
            generator_fallback: true,
            concurrency: 4,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if self.max_intents == 0 {
            return Err("max_intents must be at least 1".into());
        }
        if self.max_passages < self.k {
            return Err(format!(
                "max_passages ({}) must be at least k ({})",
                self.max_passages, self.k
            ));
        }
        if self.concurrency == 0 {
            return Err("concurrency must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Reconstructor,
    Retrieval,
    Locator,
    Generator,
    Validation,
}

impl Stage {
    pub const fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Reconstructor => "reconstructor",
            Stage::Retrieval => "retrieval",
            Stage::Locator => "locator",
            Stage::Generator => "generator",
            Stage::Validation => "validation",
        }
    }
}

impl From<AgentKind> for Stage {
    fn from(a: AgentKind) -> Self {
        match a {
            AgentKind::Reconstructor => Stage::Reconstructor,
            AgentKind::Retrieval => Stage::Retrieval,
            AgentKind::Locator => Stage::Locator,
            AgentKind::Generator => Stage::Generator,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Cause {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("judgments do not cover the passages (missing {missing:?}, unknown {unknown:?})")]
    JudgmentCoverage { missing: Vec<usize>, unknown: Vec<usize> },
    #[error("no relevant facts and generator fallback is disabled")]
    NoRelevantFacts,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("trace invariants violated: {0:?}")]
    Invariant(Vec<Violation>),
}

impl Cause {
    /// Stable machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            Cause::Backend(BackendError::BackendUnavailable { .. }) => "BackendUnavailable",
            Cause::Backend(BackendError::EmptyGeneration) => "EmptyGeneration",
            Cause::Backend(BackendError::MalformedUpstreamResponse(_)) => "MalformedUpstreamResponse",
            Cause::Backend(BackendError::InvalidRequest(_)) => "InvalidRequest",
            Cause::Grammar(GrammarError::Parse(_)) => "ParseError",
            Cause::Grammar(GrammarError::Trajectory(_)) => "TrajectoryError",
            Cause::Grammar(GrammarError::Body(_)) => "BodyError",
            Cause::Retrieval(_) => "RetrievalError",
            Cause::JudgmentCoverage { .. } => "JudgmentCoverage",
            Cause::NoRelevantFacts => "NoRelevantFacts",
            Cause::InvalidConfig(_) => "InvalidConfig",
            Cause::Invariant(_) => "InvariantViolation",
        }
    }
}

/// A failed item, tagged with the step that failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{stage} step failed: {cause}")]
pub struct PipelineError {
    pub stage: Stage,
    pub cause: Cause,
}

impl PipelineError {
    pub fn new(stage: Stage, cause: impl Into<Cause>) -> Self {
        Self {
            stage,
            cause: cause.into(),
        }
    }
}

/// What happened at the Locator step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum LocatorOutcome {
    Ran,
    /// Retrieval produced no passages.
    Skipped,
    /// The reply was unusable and `locator_required` was off.
    Degraded(String),
}

/// Which Generator prompt was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorBranch {
    /// Full trajectory including the Locator block.
    WithFacts,
    /// Instruction only.
    InstructionOnly,
}

/// A head token emitted by the backend that differs from the next step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadMismatch {
    pub step: AgentKind,
    pub expected: Option<TokenKind>,
    pub found: TokenKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepTimings {
    pub reconstructor: Option<Duration>,
    pub retrieval: Option<Duration>,
    pub locator: Option<Duration>,
    pub generator: Option<Duration>,
}

impl StepTimings {
    pub fn get(&self, step: AgentKind) -> Option<Duration> {
        match step {
            AgentKind::Reconstructor => self.reconstructor,
            AgentKind::Retrieval => self.retrieval,
            AgentKind::Locator => self.locator,
            AgentKind::Generator => self.generator,
        }
    }

    fn set(&mut self, step: AgentKind, d: Duration) {
        let slot = match step {
            AgentKind::Reconstructor => &mut self.reconstructor,
            AgentKind::Retrieval => &mut self.retrieval,
            AgentKind::Locator => &mut self.locator,
            AgentKind::Generator => &mut self.generator,
        };
        *slot = Some(d);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceTrace {
    pub instruction: String,
    pub intents: IntentSet,
    /// Intents beyond `max_intents`, in reply order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_intents: Vec<String>,
    /// Passages in their 1-based display order.
    pub passages: Vec<Passage>,
    #[serde(default)]
    pub passages_truncated: bool,
    pub locator: LocatorOutcome,
    pub judgments: Vec<LocatorJudgment>,
    pub branch: GeneratorBranch,
    pub answer: String,
    pub citations: CitationList,
    #[serde(with = "trajectory_text")]
    pub trajectory: Trajectory,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub head_mismatches: Vec<HeadMismatch>,
    /// Citation violations found before return.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    /// Wall-clock time per step; not exported.
    #[serde(skip)]
    pub timings: StepTimings,
}

impl InferenceTrace {
    pub fn is_flagged(&self) -> bool {
        !self.violations.is_empty()
    }

    pub fn has_relevant(&self) -> bool {
        self.judgments.iter().any(LocatorJudgment::is_relevant)
    }
}

mod trajectory_text {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &Trajectory, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_text())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Trajectory, D::Error> {
        let text = String::deserialize(d)?;
        let parsed = parse_trajectory(&text).map_err(serde::de::Error::custom)?;
        if parsed.to_text() != text {
            return Err(serde::de::Error::custom("trajectory text is not in canonical layout"));
        }
        Ok(parsed)
    }
}
