//! Critics that label raw examples with intents and passage judgments.

use super::templates::{intent_prompt, locator_prompt};
use super::{DatasetError, RawExample, TaskCategory};
use crate::backend::HttpBackend;
use crate::grammar::{collapse_whitespace, parse_intents, IntentSet, LocatorJudgment};
use crate::retrieval::Passage;

/// Source of intents and relevance judgments during dataset construction.
pub trait Critic: Sync {
    fn propose_intents(&self, raw: &RawExample) -> Result<IntentSet, DatasetError>;

    /// Judges `passage`, shown to the model as number `index`.
    fn judge_passage(&self, raw: &RawExample, passage: &Passage, index: usize)
        -> Result<LocatorJudgment, DatasetError>;
}

impl<C: Critic + ?Sized> Critic for &C {
    fn propose_intents(&self, raw: &RawExample) -> Result<IntentSet, DatasetError> {
        (**self).propose_intents(raw)
    }

    fn judge_passage(
        &self,
        raw: &RawExample,
        passage: &Passage,
        index: usize,
    ) -> Result<LocatorJudgment, DatasetError> {
        (**self).judge_passage(raw, passage, index)
    }
}

/// True when `fact`, minus an optional `title -` prefix, occurs in the
/// passage text after whitespace collapsing.
pub fn fact_contained(fact: &str, passage: &Passage) -> bool {
    let fact = collapse_whitespace(fact);
    let text = collapse_whitespace(&passage.text);
    let title = collapse_whitespace(&passage.title);
    let stripped = fact
        .strip_prefix(title.as_str())
        .and_then(|rest| rest.trim_start().strip_prefix('-'))
        .map(str::trim);
    let contained = |s: &str| !s.is_empty() && text.contains(s);
    stripped.is_some_and(contained) || contained(&fact)
}

/// Splits collapsed text into sentences ending in `.`, `?` or `!` followed
/// by whitespace. Joining the result with spaces restores the input.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for i in 0..bytes.len() {
        if matches!(bytes[i], b'.' | b'?' | b'!') && bytes.get(i + 1) == Some(&b' ') {
            out.push(&text[start..=i]);
            start = i + 2;
        }
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// Deterministic critic. The intent is the final line of `x`; a passage is
/// relevant iff it contains `y` (case-insensitive), and the fact is the
/// shortest run of sentences covering the first match.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleCritic;

impl RuleCritic {
    fn locate(text: &str, answer: &str) -> Option<String> {
        let sents = sentences(text);
        let holds = |i: usize, j: usize| sents[i..=j].join(" ").to_lowercase().contains(answer);
        let end = (0..sents.len()).find(|&j| holds(0, j))?;
        let start = (0..=end).rev().find(|&i| holds(i, end))?;
        Some(sents[start..=end].join(" "))
    }
}

impl Critic for RuleCritic {
    fn propose_intents(&self, raw: &RawExample) -> Result<IntentSet, DatasetError> {
        let line = raw.x.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        let intent = collapse_whitespace(line)
            .trim_start_matches(['-', ' '])
            .replace(';', ",");
        Ok(IntentSet::new([intent])?)
    }

    fn judge_passage(
        &self,
        raw: &RawExample,
        passage: &Passage,
        index: usize,
    ) -> Result<LocatorJudgment, DatasetError> {
        let answer = collapse_whitespace(&raw.y).to_lowercase();
        let text = collapse_whitespace(&passage.text);
        match Self::locate(&text, &answer) {
            Some(span) => Ok(LocatorJudgment::relevant(
                index,
                format!("{} -{span}", collapse_whitespace(&passage.title)),
            )?),
            None => Ok(LocatorJudgment::irrelevant(index)?),
        }
    }
}

/// Reads the intents out of a critic reply: the text after the last
/// `Search Intent:` label, up to an `Explanation:` label or blank line.
pub fn parse_intent_reply(reply: &str) -> Result<IntentSet, DatasetError> {
    let mut text = reply;
    if let Some(at) = text.rfind("Search Intent:") {
        text = &text[at + "Search Intent:".len()..];
    }
    let text = text.trim_start();
    let text = text.split("Explanation:").next().unwrap_or("");
    let text = text.split("\n\n").next().unwrap_or("");
    parse_intents(&collapse_whitespace(text)).map_err(|e| DatasetError::Critic(format!("intent reply: {e}")))
}

/// Reads a relevance rating and extracted span out of a critic reply.
pub fn parse_judge_reply(reply: &str, passage_title: &str, index: usize) -> Result<LocatorJudgment, DatasetError> {
    let relevant = reply.contains("[Relevant]");
    if !relevant {
        if reply.contains("[Irrelevant]") {
            return Ok(LocatorJudgment::irrelevant(index)?);
        }
        return Err(DatasetError::Critic(format!(
            "no rating in reply for passage [{index}]"
        )));
    }
    let span = reply
        .split_once("Extracted span:")
        .map(|(_, rest)| rest.trim_start())
        .and_then(|rest| rest.split("\n\n").next())
        .map(collapse_whitespace)
        .filter(|s| !s.is_empty() && s != "None")
        .ok_or_else(|| DatasetError::Critic(format!("relevant passage [{index}] without a span")))?;
    Ok(LocatorJudgment::relevant(
        index,
        format!("{} -{span}", collapse_whitespace(passage_title)),
    )?)
}

/// Critic backed by a chat-completion service.
pub struct LlmCritic {
    backend: HttpBackend,
}

impl LlmCritic {
    pub fn new(backend: HttpBackend) -> Self {
        Self { backend }
    }

    fn ask(&self, prompt: &str) -> Result<String, DatasetError> {
        self.backend
            .chat(prompt, &[])
            .map(|c| c.content)
            .map_err(|e| DatasetError::Critic(e.to_string()))
    }
}

impl Critic for LlmCritic {
    fn propose_intents(&self, raw: &RawExample) -> Result<IntentSet, DatasetError> {
        let prompt = if raw.task == TaskCategory::Dialogue {
            let lines: Vec<&str> = raw.x.lines().collect();
            let (last, history) = lines.split_last().unwrap_or((&"", &[]));
            intent_prompt(raw.task, last, &raw.y, &history.join("\\n "))
        } else {
            intent_prompt(raw.task, &raw.x, &raw.y, "")
        };
        parse_intent_reply(&self.ask(&prompt)?)
    }

    fn judge_passage(
        &self,
        raw: &RawExample,
        passage: &Passage,
        index: usize,
    ) -> Result<LocatorJudgment, DatasetError> {
        let prompt = locator_prompt(raw.task, &raw.x, &raw.y, &passage.text);
        parse_judge_reply(&self.ask(&prompt)?, &passage.title, index)
    }
}
