//! Structural checks on emitted training examples.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::critic::fact_contained;
use super::{char_len, char_offset, ExampleKind, TrainingExample};
use crate::grammar::{
    parse_citations, parse_fragment, parse_locator_body, parse_retrieval_body, parse_trajectory_located, AgentKind,
    LocatedStep, LocatorJudgment, TokenKind,
};
use crate::retrieval::Passage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskViolation {
    /// Span `index` is empty, reversed, or overlaps/precedes its predecessor.
    SpanOrder {
        index: usize,
    },
    SpanOutOfBounds {
        index: usize,
    },
    /// Text fails to parse; `offset` is a byte offset into the parsed text.
    Parse {
        offset: usize,
        message: String,
    },
    MissingSection {
        section: AgentKind,
    },
    RetrievalSupervised {
        at: usize,
    },
    SectionUncovered {
        section: AgentKind,
    },
    SpanOutsideSection {
        at: usize,
    },
    InputLayout {
        message: String,
    },
    FactNotContained {
        passage: usize,
    },
    JudgmentMismatch,
    CitationMismatch,
}

impl fmt::Display for MaskViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskViolation::SpanOrder { index } => write!(f, "loss span {index} is empty or out of order"),
            MaskViolation::SpanOutOfBounds { index } => write!(f, "loss span {index} exceeds the output"),
            MaskViolation::Parse { offset, message } => write!(f, "parse error at byte {offset}: {message}"),
            MaskViolation::MissingSection { section } => write!(f, "{section} section missing"),
            MaskViolation::RetrievalSupervised { at } => write!(f, "loss covers retrieval text at char {at}"),
            MaskViolation::SectionUncovered { section } => write!(f, "{section} section not fully covered by loss"),
            MaskViolation::SpanOutsideSection { at } => write!(f, "loss covers text outside any section at char {at}"),
            MaskViolation::InputLayout { message } => write!(f, "input layout: {message}"),
            MaskViolation::FactNotContained { passage } => write!(f, "fact for passage [{passage}] not in passage"),
            MaskViolation::JudgmentMismatch => f.write_str("judgments do not cover passages 1..n exactly once"),
            MaskViolation::CitationMismatch => f.write_str("citations differ from the relevant judgments"),
        }
    }
}

/// Returns every violation found in `ex`; empty iff the example is sound.
pub fn check_example(ex: &TrainingExample) -> Vec<MaskViolation> {
    let mut out = Vec::new();
    let len = char_len(&ex.output);
    let mut spans_ok = true;
    let mut prev_end = 0;
    for (i, &(s, e)) in ex.loss_spans.iter().enumerate() {
        if s >= e || s < prev_end {
            out.push(MaskViolation::SpanOrder { index: i });
            spans_ok = false;
        }
        if e > len {
            out.push(MaskViolation::SpanOutOfBounds { index: i });
            spans_ok = false;
        }
        prev_end = prev_end.max(e);
    }
    match ex.kind {
        ExampleKind::Long => check_long(ex, spans_ok, &mut out),
        _ => check_short(ex, spans_ok, &mut out),
    }
    out
}

fn covered(ex: &TrainingExample, len: usize) -> Vec<bool> {
    let mut mask = vec![false; len];
    for &(s, e) in &ex.loss_spans {
        for m in &mut mask[s.min(len)..e.min(len)] {
            *m = true;
        }
    }
    mask
}

fn parse_violation(e: impl fmt::Display, offset: usize) -> MaskViolation {
    MaskViolation::Parse {
        offset,
        message: e.to_string(),
    }
}

fn check_long(ex: &TrainingExample, spans_ok: bool, out: &mut Vec<MaskViolation>) {
    match ex.input.strip_suffix("</eoi>\n") {
        Some(x) if TokenKind::occurs_in(x).is_none() && !x.trim().is_empty() => {}
        _ => out.push(MaskViolation::InputLayout {
            message: "expected `<x></eoi>\\n`".into(),
        }),
    }
    let located = match parse_trajectory_located(&ex.output) {
        Ok(l) => l,
        Err(e) => {
            out.push(parse_violation(&e, e.offset()));
            return;
        }
    };
    for kind in AgentKind::ALL {
        if !located.iter().any(|l| l.step.kind == kind) {
            out.push(MaskViolation::MissingSection { section: kind });
        }
    }
    if spans_ok {
        let chars = |r: &Range<usize>| char_offset(&ex.output, r.start)..char_offset(&ex.output, r.end);
        let mask = covered(ex, char_len(&ex.output));
        let mut owner: Vec<Option<AgentKind>> = vec![None; mask.len()];
        for l in &located {
            for o in &mut owner[chars(&l.extent)] {
                *o = Some(l.step.kind);
            }
        }
        if let Some(at) = (0..mask.len()).find(|&i| mask[i] && owner[i] == Some(AgentKind::Retrieval)) {
            out.push(MaskViolation::RetrievalSupervised { at });
        }
        if let Some(at) = (0..mask.len()).find(|&i| mask[i] && owner[i].is_none()) {
            out.push(MaskViolation::SpanOutsideSection { at });
        }
        for l in located.iter().filter(|l| l.step.kind != AgentKind::Retrieval) {
            if !mask[chars(&l.extent)].iter().all(|&m| m) {
                out.push(MaskViolation::SectionUncovered { section: l.step.kind });
            }
        }
    }
    let body = |kind| {
        located
            .iter()
            .find(|l| l.step.kind == kind)
            .map(|l| l.step.body.as_str())
    };
    let passages = body(AgentKind::Retrieval).map(|b| passages_of(b, out));
    let judgments = body(AgentKind::Locator).and_then(|b| judgments_of(b, out));
    if let (Some(passages), Some(judgments)) = (&passages, &judgments) {
        check_judgments(passages, judgments, out);
    }
    if let (Some(judgments), Some(gen)) = (&judgments, body(AgentKind::Generator)) {
        check_citations(gen, judgments, out);
    }
}

fn passages_of(body: &str, out: &mut Vec<MaskViolation>) -> Vec<Passage> {
    match parse_retrieval_body(body) {
        Ok(pairs) => pairs
            .into_iter()
            .enumerate()
            .map(|(i, (title, text))| Passage {
                id: i as u64,
                word_count: text.split_whitespace().count(),
                title,
                text,
            })
            .collect(),
        Err(e) => {
            out.push(parse_violation(e, 0));
            Vec::new()
        }
    }
}

fn judgments_of(body: &str, out: &mut Vec<MaskViolation>) -> Option<Vec<LocatorJudgment>> {
    parse_locator_body(body)
        .map_err(|e| out.push(parse_violation(e, 0)))
        .ok()
}

fn check_judgments(passages: &[Passage], judgments: &[LocatorJudgment], out: &mut Vec<MaskViolation>) {
    let mut indices: Vec<usize> = judgments.iter().map(|j| j.passage_index()).collect();
    indices.sort_unstable();
    if indices != (1..=passages.len()).collect::<Vec<_>>() {
        out.push(MaskViolation::JudgmentMismatch);
    }
    for j in judgments {
        let idx = j.passage_index();
        if let (Some(fact), Some(p)) = (j.fact(), passages.get(idx.wrapping_sub(1))) {
            if !fact_contained(fact, p) {
                out.push(MaskViolation::FactNotContained { passage: idx });
            }
        }
    }
}

fn check_citations(gen_body: &str, judgments: &[LocatorJudgment], out: &mut Vec<MaskViolation>) {
    let relevant: Vec<usize> = {
        let mut r: Vec<usize> = judgments
            .iter()
            .filter(|j| j.is_relevant())
            .map(|j| j.passage_index())
            .collect();
        r.sort_unstable();
        r
    };
    match parse_citations(gen_body) {
        Ok((_, cites)) if cites.indices() == relevant.as_slice() => {}
        Ok(_) => out.push(MaskViolation::CitationMismatch),
        Err(e) => out.push(parse_violation(e, 0)),
    }
}

/// Steps expected before the supervised section, and its agent.
fn short_layout(kind: ExampleKind) -> (&'static [AgentKind], AgentKind) {
    match kind {
        ExampleKind::ShortIntent => (&[], AgentKind::Reconstructor),
        ExampleKind::ShortLocator => (&[AgentKind::Retrieval], AgentKind::Locator),
        ExampleKind::ShortGeneratorPlain => (&[], AgentKind::Generator),
        ExampleKind::ShortGeneratorFacts | ExampleKind::Long => (&[AgentKind::Locator], AgentKind::Generator),
    }
}

fn check_short(ex: &TrainingExample, spans_ok: bool, out: &mut Vec<MaskViolation>) {
    let (before, agent) = short_layout(ex.kind);
    let layout = |m: &str| MaskViolation::InputLayout { message: m.to_string() };
    let Some((x, rest)) = ex.input.split_once("</eoi>\n") else {
        out.push(layout("missing `</eoi>`"));
        return;
    };
    if TokenKind::occurs_in(x).is_some() || x.trim().is_empty() {
        out.push(layout("instruction is empty or contains a token"));
    }
    let head = format!("{}\n", agent.head());
    if !rest.ends_with(&head) {
        out.push(layout(&format!("input must end with {}", agent.head())));
    }
    let fragment = format!("{rest}{}", ex.output);
    let located: Vec<LocatedStep> = match parse_fragment(&fragment) {
        Ok(l) => l,
        Err(e) => {
            let offset = e.offset();
            out.push(parse_violation(e, offset));
            return;
        }
    };
    let kinds: Vec<AgentKind> = located.iter().map(|l| l.step.kind).collect();
    let expected: Vec<AgentKind> = before.iter().copied().chain([agent]).collect();
    if kinds != expected {
        out.push(layout(&format!("sections {kinds:?}, expected {expected:?}")));
        return;
    }
    let last = &located[located.len() - 1];
    if last.extent.start + head.len() != rest.len() || fragment[last.extent.end..] != *"\n" {
        out.push(layout("output must be exactly the supervised section"));
    }
    if spans_ok && !covered(ex, char_len(&ex.output)).iter().all(|&m| m) {
        out.push(MaskViolation::SectionUncovered { section: agent });
    }
    let body = |kind| {
        located
            .iter()
            .find(|l| l.step.kind == kind)
            .map(|l| l.step.body.as_str())
    };
    match ex.kind {
        ExampleKind::ShortLocator => {
            let passages = body(AgentKind::Retrieval)
                .map(|b| passages_of(b, out))
                .unwrap_or_default();
            if let Some(judgments) = body(AgentKind::Locator).and_then(|b| judgments_of(b, out)) {
                check_judgments(&passages, &judgments, out);
            }
        }
        ExampleKind::ShortGeneratorFacts => {
            if let Some(judgments) = body(AgentKind::Locator).and_then(|b| judgments_of(b, out)) {
                if !judgments.iter().any(|j| j.is_relevant()) {
                    out.push(MaskViolation::CitationMismatch);
                } else if let Some(gen) = body(AgentKind::Generator) {
                    check_citations(gen, &judgments, out);
                }
            }
        }
        ExampleKind::ShortGeneratorPlain => {
            if let Some(gen) = body(AgentKind::Generator) {
                check_citations(gen, &[], out);
            }
        }
        ExampleKind::ShortIntent => {
            if let Some(Err(e)) = body(AgentKind::Reconstructor).map(crate::grammar::parse_intents) {
                out.push(parse_violation(e, 0));
            }
        }
        ExampleKind::Long => {}
    }
}
