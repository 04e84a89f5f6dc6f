//! Sub-grammars for the bodies of each agent section.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::token::{AgentKind, TokenKind};
use super::trajectory::TrajectoryStep;
use crate::retrieval::Passage;

/// Fixed body of an irrelevant judgment.
pub const LACKING_FACTS: &str = "Lacking Supporting Facts.";
pub const CITE_PREFIX: &str = "[Cite]:";
const SEARCH_OPEN: &str = "Search(";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BodyError {
    #[error("no intents after processing")]
    EmptyIntentSet,
    #[error("intent {0:?} contains ';' or a line break")]
    InvalidIntent(String),
    #[error("malformed locator line {0}")]
    LocatorSyntax(usize),
    #[error("duplicate judgment for passage [{0}]")]
    DuplicateJudgment(usize),
    #[error("malformed citation line")]
    CitationSyntax,
    #[error("retrieval block needs at least one passage")]
    EmptyRetrieval,
    #[error("malformed retrieval line {0}")]
    RetrievalSyntax(usize),
    #[error("relevant judgment for passage [{0}] has no fact")]
    EmptyFact(usize),
    #[error("passage index must be at least 1")]
    ZeroIndex,
}

// ---------------------------------------------------------------------------
// Intents

/// Knowledge queries mined from an instruction (at least one).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct IntentSet {
    intents: Vec<String>,
}

impl IntentSet {
    /// Trims each intent; rejects empty sets, empty items, and items that
    /// could not survive a write/read cycle.
    pub fn new<I, S>(intents: I) -> Result<Self, BodyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Vec::new();
        for raw in intents {
            let raw: String = raw.into();
            let intent = raw.trim();
            if intent.is_empty() {
                return Err(BodyError::EmptyIntentSet);
            }
            if intent.contains([';', '\n', '\r']) || TokenKind::occurs_in(intent).is_some() {
                return Err(BodyError::InvalidIntent(intent.to_string()));
            }
            out.push(intent.to_string());
        }
        if out.is_empty() {
            return Err(BodyError::EmptyIntentSet);
        }
        Ok(Self { intents: out })
    }

    pub fn intents(&self) -> &[String] {
        &self.intents
    }

    pub fn m(&self) -> usize {
        self.intents.len()
    }

    /// Keeps the first `max` intents and returns the dropped tail.
    pub fn truncate(&mut self, max: usize) -> Vec<String> {
        let max = max.max(1);
        if self.intents.len() > max {
            self.intents.split_off(max)
        } else {
            Vec::new()
        }
    }
}

impl TryFrom<Vec<String>> for IntentSet {
    type Error = BodyError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        IntentSet::new(v)
    }
}

impl From<IntentSet> for Vec<String> {
    fn from(s: IntentSet) -> Self {
        s.intents
    }
}

/// Splits a Reconstructor body into intents. Accepts one `Search( … )`
/// wrapper around the whole list or one per item, or none at all.
pub fn parse_intents(body: &str) -> Result<IntentSet, BodyError> {
    let mut text = body.trim();
    if let Some(inner) = text.strip_prefix(SEARCH_OPEN).and_then(|t| t.strip_suffix(')')) {
        if !inner.contains(SEARCH_OPEN) {
            text = inner;
        }
    }
    let items: Vec<String> = text
        .split(';')
        .map(|item| {
            let item = item.trim();
            item.strip_prefix(SEARCH_OPEN)
                .and_then(|t| t.strip_suffix(')'))
                .unwrap_or(item)
                .trim()
                .to_string()
        })
        .filter(|item| !item.is_empty())
        .collect();
    if items.is_empty() {
        return Err(BodyError::EmptyIntentSet);
    }
    IntentSet::new(items)
}

/// Canonical Reconstructor body: `Search(q1; q2; …)`.
pub fn render_intents(intents: &IntentSet) -> String {
    format!("{SEARCH_OPEN}{})", intents.intents.join("; "))
}

// ---------------------------------------------------------------------------
// Locator judgments

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relevance {
    Relevant,
    Irrelevant,
}

impl fmt::Display for Relevance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relevance::Relevant => f.write_str("[Relevant]"),
            Relevance::Irrelevant => f.write_str("[Irrelevant]"),
        }
    }
}

/// A relevance tag for one numbered passage, with the located fact when relevant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "JudgmentRepr", into = "JudgmentRepr")]
pub struct LocatorJudgment {
    passage_index: usize,
    fact: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct JudgmentRepr {
    passage_index: usize,
    relevance: Relevance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fact: Option<String>,
}

impl TryFrom<JudgmentRepr> for LocatorJudgment {
    type Error = BodyError;
    fn try_from(r: JudgmentRepr) -> Result<Self, Self::Error> {
        match (r.relevance, r.fact) {
            (Relevance::Relevant, Some(fact)) => LocatorJudgment::relevant(r.passage_index, fact),
            (Relevance::Relevant, None) => Err(BodyError::EmptyFact(r.passage_index)),
            (Relevance::Irrelevant, None) => LocatorJudgment::irrelevant(r.passage_index),
            (Relevance::Irrelevant, Some(_)) => Err(BodyError::LocatorSyntax(0)),
        }
    }
}

impl From<LocatorJudgment> for JudgmentRepr {
    fn from(j: LocatorJudgment) -> Self {
        JudgmentRepr {
            passage_index: j.passage_index,
            relevance: j.relevance(),
            fact: j.fact,
        }
    }
}

impl LocatorJudgment {
    /// Whitespace in the fact is collapsed to single spaces so the judgment
    /// renders on one line.
    pub fn relevant(passage_index: usize, fact: impl AsRef<str>) -> Result<Self, BodyError> {
        if passage_index == 0 {
            return Err(BodyError::ZeroIndex);
        }
        let fact = collapse_whitespace(fact.as_ref());
        if fact.is_empty() || is_lacking_phrase(&fact) {
            return Err(BodyError::EmptyFact(passage_index));
        }
        if TokenKind::occurs_in(&fact).is_some() {
            return Err(BodyError::LocatorSyntax(0));
        }
        Ok(Self {
            passage_index,
            fact: Some(fact),
        })
    }

    pub fn irrelevant(passage_index: usize) -> Result<Self, BodyError> {
        if passage_index == 0 {
            return Err(BodyError::ZeroIndex);
        }
        Ok(Self {
            passage_index,
            fact: None,
        })
    }

    pub fn passage_index(&self) -> usize {
        self.passage_index
    }

    pub fn relevance(&self) -> Relevance {
        if self.fact.is_some() {
            Relevance::Relevant
        } else {
            Relevance::Irrelevant
        }
    }

    pub fn is_relevant(&self) -> bool {
        self.fact.is_some()
    }

    pub fn fact(&self) -> Option<&str> {
        self.fact.as_deref()
    }

    pub fn with_index(&self, passage_index: usize) -> Self {
        Self {
            passage_index,
            fact: self.fact.clone(),
        }
    }

    pub fn render(&self) -> String {
        match &self.fact {
            Some(fact) => format!("[Relevant]: [{}] {fact}", self.passage_index),
            None => format!("[Irrelevant]: [{}] {LACKING_FACTS}", self.passage_index),
        }
    }
}

fn is_lacking_phrase(s: &str) -> bool {
    s.trim().trim_end_matches('.') == LACKING_FACTS.trim_end_matches('.')
}

pub(crate) fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `[<tag>]: [<n>] <rest>` after an optional leading `-` bullet.
fn parse_judgment_line(line: &str) -> Option<(Relevance, usize, &str)> {
    let line = line.trim();
    let line = line.strip_prefix('-').unwrap_or(line).trim_start();
    let (relevance, rest) = if let Some(r) = line.strip_prefix("[Relevant]") {
        (Relevance::Relevant, r)
    } else {
        let r = line.strip_prefix("[Irrelevant]")?;
        (Relevance::Irrelevant, r)
    };
    let rest = rest.trim_start().strip_prefix(':')?.trim_start();
    let rest = rest.strip_prefix('[')?;
    let close = rest.find(']')?;
    let digits = &rest[..close];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let index: usize = digits.parse().ok()?;
    Some((relevance, index, rest[close + 1..].trim()))
}

/// Parses a Locator body, one judgment per non-blank line. Line numbers in
/// errors are 1-based and count blank lines.
pub fn parse_locator_body(body: &str) -> Result<Vec<LocatorJudgment>, BodyError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (relevance, index, rest) = parse_judgment_line(line).ok_or(BodyError::LocatorSyntax(lineno))?;
        if index == 0 {
            return Err(BodyError::LocatorSyntax(lineno));
        }
        let judgment = match relevance {
            Relevance::Irrelevant if is_lacking_phrase(rest) => LocatorJudgment::irrelevant(index),
            Relevance::Relevant if !rest.is_empty() && !is_lacking_phrase(rest) => {
                LocatorJudgment::relevant(index, rest)
            }
            _ => return Err(BodyError::LocatorSyntax(lineno)),
        }
        .map_err(|_| BodyError::LocatorSyntax(lineno))?;
        if !seen.insert(index) {
            return Err(BodyError::DuplicateJudgment(index));
        }
        out.push(judgment);
    }
    Ok(out)
}

pub fn render_locator_body(judgments: &[LocatorJudgment]) -> String {
    judgments
        .iter()
        .map(LocatorJudgment::render)
        .collect::<Vec<_>>()
        .join("\n")
}

// ---------------------------------------------------------------------------
// Citations

/// Strictly increasing 1-based passage numbers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CitationList(Vec<usize>);

impl CitationList {
    pub fn new(indices: Vec<usize>) -> Result<Self, BodyError> {
        if indices.first() == Some(&0) || indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BodyError::CitationSyntax);
        }
        Ok(Self(indices))
    }

    /// Sorted, deduplicated list from arbitrary indices (zero rejected).
    pub fn from_unordered(mut indices: Vec<usize>) -> Result<Self, BodyError> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// `[Cite]: [i] [j] …`; empty string for an empty list.
    pub fn render(&self) -> String {
        if self.0.is_empty() {
            return String::new();
        }
        let refs: Vec<String> = self.0.iter().map(|i| format!("[{i}]")).collect();
        format!("{CITE_PREFIX} {}", refs.join(" "))
    }
}

impl TryFrom<Vec<usize>> for CitationList {
    type Error = BodyError;
    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        CitationList::new(v)
    }
}

impl From<CitationList> for Vec<usize> {
    fn from(c: CitationList) -> Self {
        c.0
    }
}

fn parse_cite_refs(s: &str) -> Result<CitationList, BodyError> {
    let mut indices = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let inner = rest.strip_prefix('[').ok_or(BodyError::CitationSyntax)?;
        let close = inner.find(']').ok_or(BodyError::CitationSyntax)?;
        let digits = &inner[..close];
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(BodyError::CitationSyntax);
        }
        indices.push(digits.parse().map_err(|_| BodyError::CitationSyntax)?);
        rest = inner[close + 1..].trim_start();
    }
    if indices.is_empty() {
        return Err(BodyError::CitationSyntax);
    }
    CitationList::new(indices)
}

/// Splits a Generator body into the answer and its citations. The cite line
/// may be the final line or trail the answer on the same line.
pub fn parse_citations(body: &str) -> Result<(String, CitationList), BodyError> {
    let trimmed_end = body.trim_end();
    let line_start = trimmed_end.rfind('\n').map_or(0, |i| i + 1);
    let last_line = &trimmed_end[line_start..];
    if let Some(refs) = last_line.trim_start().strip_prefix(CITE_PREFIX) {
        let cites = parse_cite_refs(refs)?;
        let answer = &body[..line_start];
        let answer = answer
            .strip_suffix('\n')
            .map(|a| a.strip_suffix('\r').unwrap_or(a))
            .unwrap_or(answer);
        return Ok((answer.to_string(), cites));
    }
    if let Some(at) = last_line.rfind(CITE_PREFIX) {
        let cites = parse_cite_refs(&last_line[at + CITE_PREFIX.len()..])?;
        let answer = body[..line_start + at].trim_end_matches([' ', '\t']);
        return Ok((answer.to_string(), cites));
    }
    Ok((body.to_string(), CitationList::default()))
}

/// Canonical Generator body: the answer, then the cite line when non-empty.
pub fn render_generator_body(answer: &str, cites: &CitationList) -> String {
    if cites.is_empty() {
        answer.to_string()
    } else {
        format!("{answer}\n{}", cites.render())
    }
}

// ---------------------------------------------------------------------------
// Retrieval

/// Retrieval body: `[i] <title> -<text>` per passage, numbered from 1.
pub fn render_retrieval_body(passages: &[Passage]) -> Result<String, BodyError> {
    if passages.is_empty() {
        return Err(BodyError::EmptyRetrieval);
    }
    Ok(passages
        .iter()
        .enumerate()
        .map(|(i, p)| {
            format!(
                "[{}] {} -{}",
                i + 1,
                collapse_whitespace(&p.title),
                collapse_whitespace(&p.text)
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

/// Full `<retrieval> … </retrieval>` section.
pub fn render_retrieval_block(passages: &[Passage]) -> Result<String, BodyError> {
    let body = render_retrieval_body(passages)?;
    Ok(TrajectoryStep::new(AgentKind::Retrieval, body).to_text())
}

/// Recovers `(title, text)` pairs from a retrieval body. The title ends at the
/// first ` -`, so titles containing that sequence do not survive a round trip.
pub fn parse_retrieval_body(body: &str) -> Result<Vec<(String, String)>, BodyError> {
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = BodyError::RetrievalSyntax(i + 1);
        let expected = format!("[{}] ", out.len() + 1);
        let rest = line.trim_start().strip_prefix(expected.as_str()).ok_or(err.clone())?;
        let sep = rest.find(" -").ok_or(err)?;
        out.push((rest[..sep].to_string(), rest[sep + 2..].to_string()));
    }
    if out.is_empty() {
        return Err(BodyError::EmptyRetrieval);
    }
    Ok(out)
}
