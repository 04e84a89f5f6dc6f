use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{GeneratorBranch, InferenceTrace, LocatorOutcome};
use crate::grammar::{parse_citations, parse_intents, parse_locator_body, render_retrieval_body, AgentKind};

/// A broken trace invariant. Indices are 1-based passage numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "at")]
pub enum Violation {
    /// Passage with no judgment although the Locator ran.
    JudgmentMissing(usize),
    /// Judgment for a passage number outside the retrieved list.
    JudgmentUnknown(usize),
    DuplicateJudgment(usize),
    CitationOutOfRange(usize),
    CitationOfIrrelevant(usize),
    /// The recorded Generator branch disagrees with the judgments.
    BranchMismatch,
    StepMissing(AgentKind),
    StepUnexpected(AgentKind),
    /// A trajectory section disagrees with the structured trace fields.
    StepMismatch(AgentKind),
}

impl Violation {
    pub fn is_citation(&self) -> bool {
        matches!(
            self,
            Violation::CitationOutOfRange(_) | Violation::CitationOfIrrelevant(_)
        )
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::JudgmentMissing(i) => write!(f, "passage [{i}] has no judgment"),
            Violation::JudgmentUnknown(i) => write!(f, "judgment for unknown passage [{i}]"),
            Violation::DuplicateJudgment(i) => write!(f, "passage [{i}] judged more than once"),
            Violation::CitationOutOfRange(i) => write!(f, "citation [{i}] is out of range"),
            Violation::CitationOfIrrelevant(i) => write!(f, "citation [{i}] refers to a passage not judged relevant"),
            Violation::BranchMismatch => f.write_str("generator branch disagrees with judgments"),
            Violation::StepMissing(k) => write!(f, "{k} section missing"),
            Violation::StepUnexpected(k) => write!(f, "unexpected {k} section"),
            Violation::StepMismatch(k) => write!(f, "{k} section disagrees with trace fields"),
        }
    }
}

/// Lists every broken invariant of `t`; empty means the trace is sound.
pub fn validate_trace(t: &InferenceTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = t.passages.len();
    let ran = t.locator == LocatorOutcome::Ran;

    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for j in &t.judgments {
        *counts.entry(j.passage_index()).or_default() += 1;
    }
    if ran {
        for i in (1..=n).filter(|i| !counts.contains_key(i)) {
            out.push(Violation::JudgmentMissing(i));
        }
    }
    for (&i, &c) in &counts {
        if i == 0 || i > n {
            out.push(Violation::JudgmentUnknown(i));
        } else if c > 1 {
            out.push(Violation::DuplicateJudgment(i));
        }
    }

    for &c in t.citations.indices() {
        if c == 0 || c > n {
            out.push(Violation::CitationOutOfRange(c));
        } else if ran && !counts.contains_key(&c) {
            // already reported as missing
        } else if !t.judgments.iter().any(|j| j.passage_index() == c && j.is_relevant()) {
            out.push(Violation::CitationOfIrrelevant(c));
        }
    }

    let expected_branch = if t.has_relevant() {
        GeneratorBranch::WithFacts
    } else {
        GeneratorBranch::InstructionOnly
    };
    if t.branch != expected_branch {
        out.push(Violation::BranchMismatch);
    }

    for kind in AgentKind::ALL {
        let expected = match kind {
            AgentKind::Reconstructor | AgentKind::Generator => true,
            AgentKind::Retrieval => n > 0,
            AgentKind::Locator => ran,
        };
        match (t.trajectory.step(kind), expected) {
            (None, false) => {}
            (None, true) => out.push(Violation::StepMissing(kind)),
            (Some(_), false) => out.push(Violation::StepUnexpected(kind)),
            (Some(step), true) => {
                if !step_agrees(t, kind, &step.body) {
                    out.push(Violation::StepMismatch(kind));
                }
            }
        }
    }
    if t.locator == LocatorOutcome::Skipped && n > 0 {
        out.push(Violation::StepMissing(AgentKind::Locator));
    }
    out
}

fn step_agrees(t: &InferenceTrace, kind: AgentKind, body: &str) -> bool {
    match kind {
        AgentKind::Reconstructor => parse_intents(body).is_ok_and(|parsed| {
            let kept = t.intents.intents();
            parsed.intents().len() == kept.len() + t.dropped_intents.len()
                && parsed.intents()[..kept.len()] == *kept
                && parsed.intents()[kept.len()..] == t.dropped_intents[..]
        }),
        AgentKind::Retrieval => render_retrieval_body(&t.passages).is_ok_and(|r| r == body),
        AgentKind::Locator => parse_locator_body(body).is_ok_and(|js| js == t.judgments),
        AgentKind::Generator => {
            parse_citations(body).is_ok_and(|(answer, cites)| answer.trim() == t.answer && cites == t.citations)
        }
    }
}
