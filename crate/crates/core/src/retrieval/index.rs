//! Inverted index over passages, and its on-disk form.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chunk::{Passage, PassageId};
use super::RetrievalError;

pub const INDEX_FORMAT: &str = "trajkit-index";
pub const INDEX_VERSION: u32 = 1;

/// Lowercases a word and drops every non-alphanumeric character.
pub fn normalize_term(word: &str) -> String {
    word.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Index terms of a text, in order, with repeats.
pub fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(normalize_term).filter(|t| !t.is_empty())
}

/// Terms a passage contributes: its text followed by its title.
pub fn passage_terms(p: &Passage) -> impl Iterator<Item = String> + '_ {
    terms(&p.text).chain(terms(&p.title))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub id: PassageId,
    pub tf: u32,
}

/// Passages plus term postings and length statistics. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    passages: BTreeMap<PassageId, Passage>,
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: BTreeMap<PassageId, usize>,
    avg_doc_length: f64,
    total_docs: usize,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    index: CorpusIndex,
}

impl CorpusIndex {
    /// Builds the index. Document length is the number of indexed terms,
    /// title terms included.
    pub fn build(passages: Vec<Passage>) -> Result<Self, RetrievalError> {
        let mut seen = HashSet::new();
        for p in &passages {
            if !seen.insert(p.id) {
                return Err(RetrievalError::DuplicatePassage(p.id));
            }
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        let mut store = BTreeMap::new();
        let mut sorted = passages;
        sorted.sort_by_key(|p| p.id);
        for p in sorted {
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            let mut len = 0;
            for t in passage_terms(&p) {
                *tf.entry(t).or_default() += 1;
                len += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting { id: p.id, tf: count });
            }
            doc_lengths.insert(p.id, len);
            store.insert(p.id, p);
        }
        let total_docs = store.len();
        let avg_doc_length = if total_docs == 0 {
            0.0
        } else {
            doc_lengths.values().sum::<usize>() as f64 / total_docs as f64
        };
        Ok(Self {
            passages: store,
            postings,
            doc_lengths,
            avg_doc_length,
            total_docs,
        })
    }

    pub fn passage(&self, id: PassageId) -> Option<&Passage> {
        self.passages.get(&id)
    }

    pub fn passages(&self) -> impl Iterator<Item = &Passage> {
        self.passages.values()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    /// Number of passages containing `term`.
    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn doc_length(&self, id: PassageId) -> Option<usize> {
        self.doc_lengths.get(&id).copied()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn total_docs(&self) -> usize {
        self.total_docs
    }

    /// Writes the versioned JSON form. Output is byte-stable for equal indexes.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let file = IndexFile {
            format: INDEX_FORMAT.to_string(),
            version: INDEX_VERSION,
            index: self.clone(),
        };
        let mut json = serde_json::to_string(&file).map_err(|e| RetrievalError::IndexFormat(e.to_string()))?;
        json.push('\n');
        fs::write(path, json).map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))
    }

    /// Reads an index written by [`CorpusIndex::save`], checking the header
    /// and that the postings agree with the stored passages.
    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text = fs::read_to_string(path).map_err(|e| RetrievalError::Io(format!("{}: {e}", path.display())))?;
        let file: IndexFile = serde_json::from_str(&text).map_err(|e| RetrievalError::IndexFormat(e.to_string()))?;
        if file.format != INDEX_FORMAT || file.version != INDEX_VERSION {
            return Err(RetrievalError::IndexFormat(format!(
                "unsupported index header {} v{}",
                file.format, file.version
            )));
        }
        let rebuilt = CorpusIndex::build(file.index.passages.values().cloned().collect())?;
        if rebuilt != file.index {
            return Err(RetrievalError::IndexFormat("postings disagree with passages".into()));
        }
        Ok(rebuilt)
    }
}
