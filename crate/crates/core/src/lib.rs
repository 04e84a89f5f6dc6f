//! Building blocks for a four-agent retrieval-augmented generation pipeline
//! whose agent sections are delimited by special trajectory tokens.

pub mod backend;
pub mod dataset;
pub mod evaluation;
pub mod grammar;
pub mod orchestrator;
pub mod retrieval;
pub mod toy;
