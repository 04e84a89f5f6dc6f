use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Instant;

use super::{
    validate_trace, Cause, GeneratorBranch, HeadMismatch, InferenceConfig, InferenceTrace, LocatorOutcome,
    PipelineError, Stage, StepTimings, Violation,
};
use crate::backend::{AgentRequest, Backend, BackendError};
use crate::grammar::{
    parse_citations, parse_intents, parse_locator_body, render_retrieval_body, write_steps, AgentKind, GrammarError,
    LocatorJudgment, TokenKind, Trajectory, TrajectoryStep,
};
use crate::retrieval::{retrieve_multi, CorpusIndex};

struct StepReply {
    body: String,
    predicted: Option<TokenKind>,
}

/// Asks the backend for `agent`'s section and cleans up the reply: anything
/// from the first stray token on is cut, and surrounding whitespace goes.
fn call<B: Backend + ?Sized>(
    backend: &B,
    instruction: &str,
    prior: &str,
    agent: AgentKind,
) -> Result<StepReply, PipelineError> {
    let req = AgentRequest::new(instruction, prior, agent);
    let reply = backend
        .generate(&req)
        .map_err(|e| PipelineError::new(agent.into(), e))?;
    let (body, predicted) = match TokenKind::find_next(&reply.body, 0) {
        Some((token, at)) => (&reply.body[..at], Some(token).filter(|t| t.is_head())),
        None => (reply.body.as_str(), None),
    };
    let body = body.trim();
    if body.is_empty() {
        return Err(PipelineError::new(agent.into(), BackendError::EmptyGeneration));
    }
    Ok(StepReply {
        body: body.to_string(),
        predicted,
    })
}

fn note_head(mismatches: &mut Vec<HeadMismatch>, step: AgentKind, predicted: Option<TokenKind>) {
    let Some(found) = predicted else { return };
    let expected = step.next().map(AgentKind::head);
    if expected != Some(found) {
        log::warn!("{step} step predicted {found}, expected {expected:?}");
        mismatches.push(HeadMismatch { step, expected, found });
    }
}

fn coverage(judgments: &[LocatorJudgment], n: usize) -> Result<(), Cause> {
    let seen: BTreeSet<usize> = judgments.iter().map(LocatorJudgment::passage_index).collect();
    let missing: Vec<usize> = (1..=n).filter(|i| !seen.contains(i)).collect();
    let unknown: Vec<usize> = seen.iter().copied().filter(|i| *i > n).collect();
    if missing.is_empty() && unknown.is_empty() {
        Ok(())
    } else {
        Err(Cause::JudgmentCoverage { missing, unknown })
    }
}

/// Runs one instruction through the pipeline.
///
/// Citation problems in the Generator output do not fail the item; they are
/// listed in `violations` on the returned trace.
pub fn run_inference<B: Backend + ?Sized>(
    instruction: &str,
    index: &CorpusIndex,
    backend: &B,
    cfg: &InferenceConfig,
) -> Result<InferenceTrace, PipelineError> {
    cfg.validate()
        .map_err(|m| PipelineError::new(Stage::Config, Cause::InvalidConfig(m)))?;
    let mut timings = StepTimings::default();
    let mut mismatches = Vec::new();
    let mut steps: Vec<TrajectoryStep> = Vec::new();

    // Reconstructor
    let started = Instant::now();
    let reply = call(backend, instruction, "", AgentKind::Reconstructor)?;
    note_head(&mut mismatches, AgentKind::Reconstructor, reply.predicted);
    let mut intents =
        parse_intents(&reply.body).map_err(|e| PipelineError::new(Stage::Reconstructor, GrammarError::from(e)))?;
    let dropped_intents = intents.truncate(cfg.max_intents);
    if !dropped_intents.is_empty() {
        log::info!("dropped {} intent(s) beyond max_intents", dropped_intents.len());
    }
    steps.push(TrajectoryStep::new(AgentKind::Reconstructor, reply.body));
    timings.set(AgentKind::Reconstructor, started.elapsed());

    // Retrieval
    let started = Instant::now();
    let mut passages = retrieve_multi(index, &intents, cfg.k).map_err(|e| PipelineError::new(Stage::Retrieval, e))?;
    let passages_truncated = passages.len() > cfg.max_passages;
    passages.truncate(cfg.max_passages);
    if !passages.is_empty() {
        let body = render_retrieval_body(&passages)
            .map_err(|e| PipelineError::new(Stage::Retrieval, GrammarError::from(e)))?;
        steps.push(TrajectoryStep::new(AgentKind::Retrieval, body));
    }
    timings.set(AgentKind::Retrieval, started.elapsed());

    // Locator
    let mut judgments = Vec::new();
    let locator = if passages.is_empty() {
        LocatorOutcome::Skipped
    } else {
        let started = Instant::now();
        let reply = call(backend, instruction, &write_steps(&steps), AgentKind::Locator)?;
        let parsed = parse_locator_body(&reply.body)
            .map_err(|e| Cause::Grammar(e.into()))
            .and_then(|js| coverage(&js, passages.len()).map(|_| js));
        timings.set(AgentKind::Locator, started.elapsed());
        match parsed {
            Ok(js) => {
                note_head(&mut mismatches, AgentKind::Locator, reply.predicted);
                judgments = js;
                steps.push(TrajectoryStep::new(AgentKind::Locator, reply.body));
                LocatorOutcome::Ran
            }
            Err(cause) if cfg.locator_required || !cfg.generator_fallback => {
                return Err(PipelineError::new(Stage::Locator, cause));
            }
            Err(cause) => {
                log::warn!("locator reply unusable, generating without facts: {cause}");
                LocatorOutcome::Degraded(cause.to_string())
            }
        }
    };

    // Generator
    let started = Instant::now();
    let branch = if judgments.iter().any(LocatorJudgment::is_relevant) {
        GeneratorBranch::WithFacts
    } else if cfg.generator_fallback {
        GeneratorBranch::InstructionOnly
    } else {
        return Err(PipelineError::new(Stage::Generator, Cause::NoRelevantFacts));
    };
    let prior = match branch {
        GeneratorBranch::WithFacts => write_steps(&steps),
        GeneratorBranch::InstructionOnly => String::new(),
    };
    let reply = call(backend, instruction, &prior, AgentKind::Generator)?;
    note_head(&mut mismatches, AgentKind::Generator, reply.predicted);
    let (answer, citations) =
        parse_citations(&reply.body).map_err(|e| PipelineError::new(Stage::Generator, GrammarError::from(e)))?;
    steps.push(TrajectoryStep::new(AgentKind::Generator, reply.body));
    timings.set(AgentKind::Generator, started.elapsed());

    let trajectory =
        Trajectory::new(steps).map_err(|e| PipelineError::new(Stage::Validation, GrammarError::from(e)))?;
    let mut trace = InferenceTrace {
        instruction: instruction.to_string(),
        intents,
        dropped_intents,
        passages,
        passages_truncated,
        locator,
        judgments,
        branch,
        answer: answer.trim().to_string(),
        citations,
        trajectory,
        head_mismatches: mismatches,
        violations: Vec::new(),
        timings,
    };
    let violations = validate_trace(&trace);
    let (flagged, fatal): (Vec<Violation>, Vec<Violation>) = violations.into_iter().partition(Violation::is_citation);
    if !fatal.is_empty() {
        return Err(PipelineError::new(Stage::Validation, Cause::Invariant(fatal)));
    }
    if !flagged.is_empty() {
        log::warn!("trace flagged: {flagged:?}");
    }
    trace.violations = flagged;
    Ok(trace)
}

/// Runs every instruction, at most `cfg.concurrency` at a time. Results keep
/// input order and one failure never stops the others.
pub fn run_batch<B: Backend + ?Sized, S: AsRef<str> + Sync>(
    instructions: &[S],
    index: &CorpusIndex,
    backend: &B,
    cfg: &InferenceConfig,
) -> Vec<Result<InferenceTrace, PipelineError>> {
    if instructions.is_empty() {
        return Vec::new();
    }
    let workers = cfg.concurrency.clamp(1, instructions.len());
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<InferenceTrace, PipelineError>>>> =
        Mutex::new((0..instructions.len()).map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(instruction) = instructions.get(i) else { break };
                let result = run_inference(instruction.as_ref(), index, backend, cfg);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|r| r.expect("every slot is filled once all workers finish"))
        .collect()
}
