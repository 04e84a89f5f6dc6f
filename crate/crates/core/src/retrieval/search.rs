//! Ranking: the BM25 scorer, top-k selection and multi-intent retrieval.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::chunk::{Passage, PassageId};
use super::index::{terms, CorpusIndex};
use super::RetrievalError;
use crate::grammar::IntentSet;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Produces a relevance score for passages given a query. Passages left out
/// of the result are treated as scoring zero.
pub trait Scorer: Send + Sync {
    fn score(&self, index: &CorpusIndex, query: &str) -> Result<Vec<(PassageId, f64)>, RetrievalError>;
}

/// Okapi BM25 over the index postings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25 {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25 {
    fn default() -> Self {
        Self { k1: BM25_K1, b: BM25_B }
    }
}

impl Bm25 {
    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`, positive for every n ≤ N.
    pub fn idf(total_docs: usize, doc_freq: usize) -> f64 {
        let n = doc_freq as f64;
        (1.0 + (total_docs as f64 - n + 0.5) / (n + 0.5)).ln()
    }
}

/// Distinct query terms in first-occurrence order.
pub fn query_terms(query: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    terms(query).filter(|t| seen.insert(t.clone())).collect()
}

impl Scorer for Bm25 {
    fn score(&self, index: &CorpusIndex, query: &str) -> Result<Vec<(PassageId, f64)>, RetrievalError> {
        let qterms = query_terms(query);
        if qterms.is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        let n = index.total_docs();
        let avgdl = index.avg_doc_length();
        let mut acc: BTreeMap<PassageId, f64> = BTreeMap::new();
        for term in &qterms {
            let postings = index.postings(term);
            if postings.is_empty() {
                continue;
            }
            let idf = Bm25::idf(n, postings.len());
            for posting in postings {
                let tf = posting.tf as f64;
                let dl = index.doc_length(posting.id).unwrap_or(0) as f64;
                let norm = 1.0 - self.b + self.b * dl / avgdl;
                *acc.entry(posting.id).or_default() += idf * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
            }
        }
        Ok(acc.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPassage {
    pub id: PassageId,
    pub score: f64,
}

/// At most k passages, scores non-increasing, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: String,
    pub ranked: Vec<ScoredPassage>,
}

/// Orders scored passages by descending score then ascending id, drops
/// non-positive scores and keeps the first `k`.
pub fn rank_top_k(scores: Vec<(PassageId, f64)>, k: usize) -> Vec<ScoredPassage> {
    let mut ranked: Vec<ScoredPassage> = scores
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(id, score)| ScoredPassage { id, score })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    ranked.truncate(k);
    ranked
}

pub fn retrieve_with(
    scorer: &dyn Scorer,
    index: &CorpusIndex,
    query: &str,
    k: usize,
) -> Result<RetrievalResult, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let scores = scorer.score(index, query)?;
    Ok(RetrievalResult {
        query: query.to_string(),
        ranked: rank_top_k(scores, k),
    })
}

/// Top-k passages for `query` under BM25 (k1 = 1.2, b = 0.75).
pub fn retrieve(index: &CorpusIndex, query: &str, k: usize) -> Result<RetrievalResult, RetrievalError> {
    retrieve_with(&Bm25::default(), index, query, k)
}

/// Per-intent top-k lists concatenated in intent order, deduplicated by id
/// (first occurrence wins). The output order is the global 1-based numbering
/// used downstream.
pub fn retrieve_multi_with(
    scorer: &dyn Scorer,
    index: &CorpusIndex,
    intents: &IntentSet,
    k: usize,
) -> Result<Vec<Passage>, RetrievalError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut any_query = false;
    for intent in intents.intents() {
        let result = match retrieve_with(scorer, index, intent, k) {
            Ok(r) => r,
            Err(RetrievalError::EmptyQuery) => continue,
            Err(e) => return Err(e),
        };
        any_query = true;
        for hit in result.ranked {
            if seen.insert(hit.id) {
                if let Some(p) = index.passage(hit.id) {
                    out.push(p.clone());
                }
            }
        }
    }
    if !any_query {
        return Err(RetrievalError::EmptyQuery);
    }
    Ok(out)
}

pub fn retrieve_multi(index: &CorpusIndex, intents: &IntentSet, k: usize) -> Result<Vec<Passage>, RetrievalError> {
    retrieve_multi_with(&Bm25::default(), index, intents, k)
}
