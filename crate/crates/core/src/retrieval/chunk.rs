use serde::{Deserialize, Serialize};

use super::RetrievalError;

/// Passage length in whitespace-separated words.
pub const PASSAGE_WORDS: usize = 100;

pub type PassageId = u64;

/// A window of at most [`PASSAGE_WORDS`] words from one source document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: PassageId,
    pub title: String,
    pub text: String,
    pub word_count: usize,
}

/// One corpus line: `{"title": …, "text": …}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub title: String,
    pub text: String,
}

/// Splits `body` into consecutive non-overlapping windows of
/// [`PASSAGE_WORDS`] words (the last may be shorter). Ids count from 0.
pub fn chunk_document(title: &str, body: &str) -> Result<Vec<Passage>, RetrievalError> {
    let words: Vec<&str> = body.split_whitespace().collect();
    if words.is_empty() {
        return Err(RetrievalError::EmptyDocument {
            title: title.to_string(),
        });
    }
    let title = crate::grammar::collapse_whitespace(title);
    Ok(words
        .chunks(PASSAGE_WORDS)
        .enumerate()
        .map(|(i, window)| Passage {
            id: i as PassageId,
            title: title.clone(),
            text: window.join(" "),
            word_count: window.len(),
        })
        .collect())
}

/// Chunks every document and numbers passages sequentially across the corpus.
pub fn chunk_corpus(docs: &[Document]) -> Result<Vec<Passage>, RetrievalError> {
    let mut out = Vec::new();
    for doc in docs {
        for mut p in chunk_document(&doc.title, &doc.text)? {
            p.id = out.len() as PassageId;
            out.push(p);
        }
    }
    Ok(out)
}
