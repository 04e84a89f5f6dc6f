//! Long and short example builders.

use super::critic::{fact_contained, Critic};
use super::{char_len, char_offset, normalize_dialogue, DatasetError, ExampleKind, RawExample, TrainingExample};
use crate::grammar::{
    parse_trajectory_located, render_generator_body, render_intents, render_locator_body, render_retrieval_block,
    render_retrieval_body, serialize_trajectory, AgentKind, CitationList, LocatorJudgment, TokenKind, TrajectoryStep,
};
use crate::orchestrator::InferenceConfig;
use crate::retrieval::{retrieve_multi, CorpusIndex, Passage};

fn prepared(raw: &RawExample) -> Result<RawExample, DatasetError> {
    raw.validate()?;
    normalize_dialogue(raw.clone())
}

fn instruction_prefix(raw: &RawExample) -> String {
    format!("{}{}\n", raw.x.trim(), TokenKind::InstructionEnd)
}

fn source_of(raw: &RawExample) -> String {
    raw.source.clone().unwrap_or_default()
}

fn short(kind: ExampleKind, raw: &RawExample, input: String, agent: AgentKind, body: &str) -> TrainingExample {
    let output = format!("{body}\n{}\n", agent.end());
    TrainingExample {
        kind,
        input,
        loss_spans: vec![(0, char_len(&output))],
        output,
        source: source_of(raw),
    }
}

/// Judges every passage in order, numbering from 1. A relevant fact that is
/// not contained in its passage is a hard error.
pub fn judge_all<C: Critic + ?Sized>(
    raw: &RawExample,
    critic: &C,
    passages: &[Passage],
) -> Result<Vec<LocatorJudgment>, DatasetError> {
    passages
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let index = i + 1;
            let j = critic.judge_passage(raw, p, index)?.with_index(index);
            match j.fact() {
                Some(fact) if !fact_contained(fact, p) => Err(DatasetError::FactContainmentViolation(index)),
                _ => Ok(j),
            }
        })
        .collect()
}

fn relevant_citations(judgments: &[LocatorJudgment]) -> CitationList {
    let cited = judgments
        .iter()
        .filter(|j| j.is_relevant())
        .map(|j| j.passage_index())
        .collect();
    CitationList::from_unordered(cited).unwrap_or_default()
}

fn retrieve_for<C: Critic + ?Sized>(
    raw: &RawExample,
    critic: &C,
    index: &CorpusIndex,
    cfg: &InferenceConfig,
) -> Result<(crate::grammar::IntentSet, Vec<Passage>), DatasetError> {
    let mut intents = critic.propose_intents(raw)?;
    intents.truncate(cfg.max_intents);
    let mut passages = retrieve_multi(index, &intents, cfg.k)?;
    passages.truncate(cfg.max_passages);
    if passages.is_empty() {
        return Err(DatasetError::NoPassages);
    }
    Ok((intents, passages))
}

/// Full four-section trajectory. Retrieval uses the same `k` and caps as
/// inference so that a built example can be replayed by the pipeline.
pub fn build_long_example<C: Critic + ?Sized>(
    raw: &RawExample,
    critic: &C,
    index: &CorpusIndex,
    cfg: &InferenceConfig,
) -> Result<TrainingExample, DatasetError> {
    let raw = prepared(raw)?;
    let (intents, passages) = retrieve_for(&raw, critic, index, cfg)?;
    let judgments = judge_all(&raw, critic, &passages)?;
    let cites = relevant_citations(&judgments);
    let steps = vec![
        TrajectoryStep::new(AgentKind::Reconstructor, render_intents(&intents)),
        TrajectoryStep::new(AgentKind::Retrieval, render_retrieval_body(&passages)?),
        TrajectoryStep::new(AgentKind::Locator, render_locator_body(&judgments)),
        TrajectoryStep::new(AgentKind::Generator, render_generator_body(raw.y.trim(), &cites)),
    ];
    let output = serialize_trajectory(&steps).map_err(crate::grammar::GrammarError::from)?;
    let located = parse_trajectory_located(&output).map_err(crate::grammar::GrammarError::from)?;
    let loss_spans = located
        .iter()
        .filter(|l| l.step.kind != AgentKind::Retrieval)
        .map(|l| (char_offset(&output, l.extent.start), char_offset(&output, l.extent.end)))
        .collect();
    Ok(TrainingExample {
        kind: ExampleKind::Long,
        input: instruction_prefix(&raw),
        output,
        loss_spans,
        source: source_of(&raw),
    })
}

pub fn build_short_intent<C: Critic + ?Sized>(raw: &RawExample, critic: &C) -> Result<TrainingExample, DatasetError> {
    let raw = prepared(raw)?;
    let intents = critic.propose_intents(&raw)?;
    let input = format!("{}{}\n", instruction_prefix(&raw), TokenKind::ReconstructorHead);
    Ok(short(
        ExampleKind::ShortIntent,
        &raw,
        input,
        AgentKind::Reconstructor,
        &render_intents(&intents),
    ))
}

pub fn build_short_locator<C: Critic + ?Sized>(
    raw: &RawExample,
    passages: &[Passage],
    critic: &C,
) -> Result<TrainingExample, DatasetError> {
    let raw = prepared(raw)?;
    if passages.is_empty() {
        return Err(DatasetError::NoPassages);
    }
    let judgments = judge_all(&raw, critic, passages)?;
    let input = format!(
        "{}{}{}\n",
        instruction_prefix(&raw),
        render_retrieval_block(passages)?,
        TokenKind::LocatorHead
    );
    Ok(short(
        ExampleKind::ShortLocator,
        &raw,
        input,
        AgentKind::Locator,
        &render_locator_body(&judgments),
    ))
}

/// Plain variant without judgments; with judgments, the locator section is
/// part of the input and the answer cites every relevant passage.
pub fn build_short_generator(
    raw: &RawExample,
    judgments: Option<&[LocatorJudgment]>,
) -> Result<TrainingExample, DatasetError> {
    let raw = prepared(raw)?;
    let answer = raw.y.trim();
    match judgments {
        None => {
            let input = format!("{}{}\n", instruction_prefix(&raw), TokenKind::GeneratorHead);
            Ok(short(
                ExampleKind::ShortGeneratorPlain,
                &raw,
                input,
                AgentKind::Generator,
                answer,
            ))
        }
        Some(judgments) => {
            let cites = relevant_citations(judgments);
            if cites.is_empty() {
                return Err(DatasetError::NoRelevantFacts);
            }
            let locator = TrajectoryStep::new(AgentKind::Locator, render_locator_body(judgments));
            let input = format!(
                "{}{}{}\n",
                instruction_prefix(&raw),
                locator.to_text(),
                TokenKind::GeneratorHead
            );
            Ok(short(
                ExampleKind::ShortGeneratorFacts,
                &raw,
                input,
                AgentKind::Generator,
                &render_generator_body(answer, &cites),
            ))
        }
    }
}

/// Builds one example of `kind`, retrieving and judging as that kind needs.
pub fn build_example<C: Critic + ?Sized>(
    kind: ExampleKind,
    raw: &RawExample,
    critic: &C,
    index: &CorpusIndex,
    cfg: &InferenceConfig,
) -> Result<TrainingExample, DatasetError> {
    match kind {
        ExampleKind::Long => build_long_example(raw, critic, index, cfg),
        ExampleKind::ShortIntent => build_short_intent(raw, critic),
        ExampleKind::ShortGeneratorPlain => build_short_generator(raw, None),
        ExampleKind::ShortLocator => {
            let norm = prepared(raw)?;
            let (_, passages) = retrieve_for(&norm, critic, index, cfg)?;
            build_short_locator(&norm, &passages, critic)
        }
        ExampleKind::ShortGeneratorFacts => {
            let norm = prepared(raw)?;
            let (_, passages) = retrieve_for(&norm, critic, index, cfg)?;
            let judgments = judge_all(&norm, critic, &passages)?;
            build_short_generator(&norm, Some(&judgments))
        }
    }
}
