//! Corpus chunking, the inverted index and lexical top-k retrieval.

mod chunk;
mod index;
mod search;

pub use chunk::{chunk_corpus, chunk_document, Document, Passage, PassageId, PASSAGE_WORDS};
pub use index::{normalize_term, passage_terms, terms, CorpusIndex, Posting, INDEX_FORMAT, INDEX_VERSION};
pub use search::{
    query_terms, rank_top_k, retrieve, retrieve_multi, retrieve_multi_with, retrieve_with, Bm25, RetrievalResult,
    ScoredPassage, Scorer, BM25_B, BM25_K1,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrievalError {
    #[error("document {title:?} has an empty body")]
    EmptyDocument { title: String },
    #[error("duplicate passage id {0}")]
    DuplicatePassage(PassageId),
    #[error("query has no indexable terms")]
    EmptyQuery,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("io error: {0}")]
    Io(String),
    #[error("bad index file: {0}")]
    IndexFormat(String),
}
