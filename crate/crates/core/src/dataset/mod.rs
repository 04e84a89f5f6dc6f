//! Training-example construction from raw task data.
//!
//! A long example is a whole trajectory with the retrieval section left out
//! of the loss. Short examples each exercise one agent section.

mod build;
mod critic;
mod emit;
mod mask;
mod templates;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{collapse_whitespace, GrammarError, TokenKind, CITE_PREFIX};
use crate::retrieval::RetrievalError;

pub use build::{
    build_example, build_long_example, build_short_generator, build_short_intent, build_short_locator, judge_all,
};
pub use critic::{fact_contained, parse_intent_reply, parse_judge_reply, Critic, LlmCritic, RuleCritic};
pub use emit::{emit_dataset, manifest_path, read_examples, DatasetManifest, MANIFEST_SCHEMA_VERSION};
pub use mask::{check_example, MaskViolation};
pub use templates::{intent_prompt, locator_prompt};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("invalid example: {0}")]
    InvalidExample(String),
    #[error("dialogue has neither history nor a question")]
    InvalidDialogue,
    #[error("fact for passage [{0}] is not contained in the passage")]
    FactContainmentViolation(usize),
    #[error("no passage was judged relevant")]
    NoRelevantFacts,
    #[error("retrieval returned no passages")]
    NoPassages,
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("critic failed: {0}")]
    Critic(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<crate::grammar::BodyError> for DatasetError {
    fn from(e: crate::grammar::BodyError) -> Self {
        DatasetError::Grammar(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskCategory {
    FactVerification,
    Dialogue,
    OpenQa,
    Commonsense,
    General,
}

impl TaskCategory {
    pub const ALL: [TaskCategory; 5] = [
        TaskCategory::FactVerification,
        TaskCategory::Dialogue,
        TaskCategory::OpenQa,
        TaskCategory::Commonsense,
        TaskCategory::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskCategory::FactVerification => "fact-verification",
            TaskCategory::Dialogue => "dialogue",
            TaskCategory::OpenQa => "open-qa",
            TaskCategory::Commonsense => "commonsense",
            TaskCategory::General => "general",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for TaskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One (question, answer) exchange of a dialogue history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    #[serde(alias = "q")]
    pub question: String,
    #[serde(alias = "a")]
    pub answer: String,
}

/// A task item in the unified format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExample {
    pub task: TaskCategory,
    #[serde(alias = "question", alias = "instruction")]
    pub x: String,
    #[serde(alias = "answer", alias = "output")]
    pub y: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<Turn>,
    /// Originating dataset name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl RawExample {
    pub fn new(task: TaskCategory, x: impl Into<String>, y: impl Into<String>) -> Self {
        Self {
            task,
            x: x.into(),
            y: y.into(),
            history: Vec::new(),
            source: None,
        }
    }

    /// Rejects empty fields, embedded trajectory tokens, and answers that
    /// would be read back as carrying citations.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.x.trim().is_empty() && !(self.task == TaskCategory::Dialogue && !self.history.is_empty()) {
            return Err(DatasetError::InvalidExample("empty x".into()));
        }
        if self.y.trim().is_empty() {
            return Err(DatasetError::InvalidExample("empty y".into()));
        }
        if !self.history.is_empty() && self.task != TaskCategory::Dialogue {
            return Err(DatasetError::InvalidExample("history on a non-dialogue task".into()));
        }
        let texts = [&self.x, &self.y]
            .into_iter()
            .chain(self.history.iter().flat_map(|t| [&t.question, &t.answer]));
        for text in texts {
            if let Some(token) = TokenKind::occurs_in(text) {
                return Err(DatasetError::InvalidExample(format!("contains {token}")));
            }
        }
        if self.y.contains(CITE_PREFIX) {
            return Err(DatasetError::InvalidExample(format!("y contains {CITE_PREFIX}")));
        }
        Ok(())
    }
}

/// Folds a dialogue history into `x` as `question\n-answer\n` lines followed
/// by the final question. Other tasks and empty histories pass through.
pub fn normalize_dialogue(raw: RawExample) -> Result<RawExample, DatasetError> {
    if raw.task != TaskCategory::Dialogue {
        return Ok(raw);
    }
    if raw.history.is_empty() {
        if raw.x.trim().is_empty() {
            return Err(DatasetError::InvalidDialogue);
        }
        return Ok(raw);
    }
    let line = |s: &str| collapse_whitespace(s).trim_start_matches(['-', ' ']).to_string();
    let mut x = String::new();
    for turn in &raw.history {
        x.push_str(&line(&turn.question));
        x.push_str("\n-");
        x.push_str(&collapse_whitespace(&turn.answer));
        x.push('\n');
    }
    x.push_str(&line(&raw.x));
    Ok(RawExample {
        x,
        history: Vec::new(),
        ..raw
    })
}

/// Output variants a builder can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    Long,
    ShortIntent,
    ShortLocator,
    ShortGeneratorPlain,
    ShortGeneratorFacts,
}

impl ExampleKind {
    pub const ALL: [ExampleKind; 5] = [
        ExampleKind::Long,
        ExampleKind::ShortIntent,
        ExampleKind::ShortLocator,
        ExampleKind::ShortGeneratorPlain,
        ExampleKind::ShortGeneratorFacts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleKind::Long => "long",
            ExampleKind::ShortIntent => "short_intent",
            ExampleKind::ShortLocator => "short_locator",
            ExampleKind::ShortGeneratorPlain => "short_generator_plain",
            ExampleKind::ShortGeneratorFacts => "short_generator_facts",
        }
    }

    /// Accepts the serialized name or its hyphenated form.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.replace('-', "_");
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ExampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One emitted training line. `loss_spans` are half-open character ranges
/// into `output`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingExample {
    pub kind: ExampleKind,
    pub input: String,
    pub output: String,
    pub loss_spans: Vec<(usize, usize)>,
    pub source: String,
}

pub(crate) fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Character offset of byte offset `b` in `s`.
pub(crate) fn char_offset(s: &str, b: usize) -> usize {
    s[..b].chars().count()
}
