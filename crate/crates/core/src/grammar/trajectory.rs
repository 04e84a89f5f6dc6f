//! Typed trajectories and their text serialization.
//!
//! A trajectory is a sequence of agent sections, each written as
//!
//! ```text
//! <head>\n<body>\n<end>\n
//! ```
//!
//! Sections appear in the fixed order Reconstructor, Retrieval, Locator,
//! Generator; each at most once. Writing is strict (exactly one newline after
//! the head and before the end token). Reading is lenient about whitespace
//! between sections and around bodies that are not newline-delimited.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::token::{AgentKind, TokenKind};

/// Invariant violations detected when constructing or writing a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("trajectory has no generator step")]
    MissingGenerator,
    #[error("step {step} ({kind}) is out of order")]
    StepOrder { step: usize, kind: AgentKind },
    #[error("step {step} ({kind}) body contains the token {token}")]
    NestedToken {
        step: usize,
        kind: AgentKind,
        token: TokenKind,
    },
    #[error("step {step} ({kind}) body ends with a carriage return")]
    TrailingCarriageReturn { step: usize, kind: AgentKind },
}

/// Located failures when reading trajectory text. Offsets are byte offsets.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{kind} head at offset {offset} is never closed")]
    UnclosedHead { kind: AgentKind, offset: usize },
    #[error("expected {expected} but found {found} at offset {offset}")]
    MismatchedEnd {
        expected: TokenKind,
        found: TokenKind,
        offset: usize,
    },
    #[error("{kind} section at offset {offset} violates step order")]
    OrderViolation { kind: AgentKind, offset: usize },
    #[error("unexpected text at offset {offset}")]
    TrailingGarbage { offset: usize },
    #[error("no generator section (text ends at offset {offset})")]
    MissingGenerator { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match *self {
            ParseError::UnclosedHead { offset, .. }
            | ParseError::MismatchedEnd { offset, .. }
            | ParseError::OrderViolation { offset, .. }
            | ParseError::TrailingGarbage { offset }
            | ParseError::MissingGenerator { offset } => offset,
        }
    }
}

/// One (head, body, end) section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub kind: AgentKind,
    pub body: String,
}

impl TrajectoryStep {
    pub fn new(kind: AgentKind, body: impl Into<String>) -> Self {
        Self {
            kind,
            body: body.into(),
        }
    }

    /// Canonical text of this single section.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.body.len() + 32);
        write_step(&mut out, self);
        out
    }
}

fn write_step(out: &mut String, step: &TrajectoryStep) {
    out.push_str(step.kind.head().as_str());
    out.push('\n');
    out.push_str(&step.body);
    out.push('\n');
    out.push_str(step.kind.end().as_str());
    out.push('\n');
}

/// Checks order and nesting for a sequence of steps; `require_generator`
/// distinguishes full trajectories from fragments.
pub fn validate_steps(steps: &[TrajectoryStep], require_generator: bool) -> Result<(), TrajectoryError> {
    let mut last: Option<usize> = None;
    for (i, step) in steps.iter().enumerate() {
        if last.is_some_and(|r| step.kind.rank() <= r) {
            return Err(TrajectoryError::StepOrder {
                step: i,
                kind: step.kind,
            });
        }
        last = Some(step.kind.rank());
        if let Some(token) = TokenKind::occurs_in(&step.body) {
            return Err(TrajectoryError::NestedToken {
                step: i,
                kind: step.kind,
                token,
            });
        }
        if step.body.ends_with('\r') {
            return Err(TrajectoryError::TrailingCarriageReturn {
                step: i,
                kind: step.kind,
            });
        }
    }
    if require_generator && steps.last().map(|s| s.kind) != Some(AgentKind::Generator) {
        return Err(TrajectoryError::MissingGenerator);
    }
    Ok(())
}

/// A validated trajectory: ordered, non-nested, ending in a Generator step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryRepr", into = "TrajectoryRepr")]
pub struct Trajectory {
    steps: Vec<TrajectoryStep>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRepr {
    steps: Vec<TrajectoryStep>,
}

impl TryFrom<TrajectoryRepr> for Trajectory {
    type Error = TrajectoryError;
    fn try_from(r: TrajectoryRepr) -> Result<Self, Self::Error> {
        Trajectory::new(r.steps)
    }
}

impl From<Trajectory> for TrajectoryRepr {
    fn from(t: Trajectory) -> Self {
        TrajectoryRepr { steps: t.steps }
    }
}

impl Trajectory {
    pub fn new(steps: Vec<TrajectoryStep>) -> Result<Self, TrajectoryError> {
        validate_steps(&steps, true)?;
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[TrajectoryStep] {
        &self.steps
    }

    pub fn into_steps(self) -> Vec<TrajectoryStep> {
        self.steps
    }

    pub fn step(&self, kind: AgentKind) -> Option<&TrajectoryStep> {
        self.steps.iter().find(|s| s.kind == kind)
    }

    /// Canonical text form.
    pub fn to_text(&self) -> String {
        write_steps(&self.steps)
    }
}

/// Writes steps without validation. Callers that accept untrusted steps
/// should go through [`serialize_trajectory`].
pub fn write_steps(steps: &[TrajectoryStep]) -> String {
    let mut out = String::new();
    for step in steps {
        write_step(&mut out, step);
    }
    out
}

/// Validates and serializes a step list as a full trajectory.
pub fn serialize_trajectory(steps: &[TrajectoryStep]) -> Result<String, TrajectoryError> {
    validate_steps(steps, true)?;
    Ok(write_steps(steps))
}

/// A parsed step along with where it sits in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocatedStep {
    pub step: TrajectoryStep,
    /// Byte range from the first byte of the head token to one past the end token.
    pub extent: Range<usize>,
}

/// Parses a full trajectory (Generator mandatory).
pub fn parse_trajectory(s: &str) -> Result<Trajectory, ParseError> {
    let steps = parse_located(s, true)?;
    Ok(Trajectory {
        steps: steps.into_iter().map(|l| l.step).collect(),
    })
}

/// Parses an ordered run of sections that need not end in a Generator step.
pub fn parse_fragment(s: &str) -> Result<Vec<LocatedStep>, ParseError> {
    parse_located(s, false)
}

/// Parses a full trajectory and keeps section extents.
pub fn parse_trajectory_located(s: &str) -> Result<Vec<LocatedStep>, ParseError> {
    parse_located(s, true)
}

fn parse_located(s: &str, require_generator: bool) -> Result<Vec<LocatedStep>, ParseError> {
    let mut steps: Vec<LocatedStep> = Vec::new();
    let mut pos = 0;
    loop {
        pos = skip_whitespace(s, pos);
        if pos == s.len() {
            break;
        }
        let Some(agent) = TokenKind::at_start(&s[pos..]).and_then(TokenKind::head_of) else {
            return Err(ParseError::TrailingGarbage { offset: pos });
        };
        if steps.last().is_some_and(|l| agent.rank() <= l.step.kind.rank()) {
            return Err(ParseError::OrderViolation {
                kind: agent,
                offset: pos,
            });
        }
        let body_start = pos + agent.head().as_str().len();
        match TokenKind::find_next(s, body_start) {
            None => {
                return Err(ParseError::UnclosedHead {
                    kind: agent,
                    offset: pos,
                })
            }
            Some((found, at)) if found != agent.end() => {
                return Err(ParseError::MismatchedEnd {
                    expected: agent.end(),
                    found,
                    offset: at,
                })
            }
            Some((end, at)) => {
                let body = interior(&s[body_start..at]);
                let stop = at + end.as_str().len();
                steps.push(LocatedStep {
                    step: TrajectoryStep::new(agent, body),
                    extent: pos..stop,
                });
                pos = stop;
            }
        }
    }
    if require_generator && steps.last().map(|l| l.step.kind) != Some(AgentKind::Generator) {
        return Err(ParseError::MissingGenerator { offset: s.len() });
    }
    Ok(steps)
}

fn skip_whitespace(s: &str, pos: usize) -> usize {
    let rest = &s[pos..];
    pos + (rest.len() - rest.trim_start().len())
}

/// Strips one newline on each side when present; otherwise strips horizontal
/// whitespace on that side (inline bodies such as `<Generator> y</eog>`).
fn interior(raw: &str) -> String {
    let mut body = raw;
    if let Some(rest) = body.strip_prefix("\r\n").or_else(|| body.strip_prefix('\n')) {
        body = rest;
    } else {
        body = body.trim_start_matches([' ', '\t']);
    }
    if let Some(rest) = body.strip_suffix("\r\n").or_else(|| body.strip_suffix('\n')) {
        body = rest;
    } else {
        body = body.trim_end_matches([' ', '\t']);
    }
    body.trim_end_matches('\r').to_string()
}
