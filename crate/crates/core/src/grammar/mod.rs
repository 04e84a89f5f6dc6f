//! The trajectory-token language: tokens, section ordering, and the
//! per-agent body formats.

mod bodies;
mod token;
mod trajectory;

pub(crate) use bodies::collapse_whitespace;
pub use bodies::{
    parse_citations, parse_intents, parse_locator_body, parse_retrieval_body, render_generator_body, render_intents,
    render_locator_body, render_retrieval_block, render_retrieval_body, BodyError, CitationList, IntentSet,
    LocatorJudgment, Relevance, CITE_PREFIX, LACKING_FACTS,
};
pub use token::{AgentKind, TokenKind};
pub use trajectory::{
    parse_fragment, parse_trajectory, parse_trajectory_located, serialize_trajectory, validate_steps, write_steps,
    LocatedStep, ParseError, Trajectory, TrajectoryError, TrajectoryStep,
};

use thiserror::Error;

/// Any failure raised by the grammar layer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Body(#[from] BodyError),
}
