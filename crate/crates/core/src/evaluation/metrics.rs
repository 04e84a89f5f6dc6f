//! Answer-matching metrics.

use crate::grammar::collapse_whitespace;
use crate::orchestrator::InferenceTrace;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercases, removes punctuation and the articles `a`/`an`/`the`, and
/// collapses whitespace.
pub fn normalize_answer(s: &str) -> String {
    let stripped: String = s
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    stripped
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

fn contains_any<S: AsRef<str>>(normalized_pred: &str, golds: &[S]) -> bool {
    golds.iter().any(|g| {
        let g = normalize_answer(g.as_ref());
        !g.is_empty() && normalized_pred.contains(&g)
    })
}

/// 1.0 iff some gold answer occurs in the prediction after normalization.
/// Golds that normalize to nothing never match.
pub fn match_accuracy<S: AsRef<str>>(prediction: &str, golds: &[S]) -> f64 {
    if contains_any(&normalize_answer(prediction), golds) {
        1.0
    } else {
        0.0
    }
}

/// Fraction of answer sets with at least one member in the prediction.
pub fn str_em<S: AsRef<str>>(prediction: &str, answer_sets: &[Vec<S>]) -> f64 {
    if answer_sets.is_empty() {
        return 0.0;
    }
    let pred = normalize_answer(prediction);
    let hits = answer_sets.iter().filter(|set| contains_any(&pred, set)).count();
    hits as f64 / answer_sets.len() as f64
}

fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Word-level LCS F1 against the best-matching reference.
pub fn rouge_l<S: AsRef<str>>(prediction: &str, references: &[S]) -> f64 {
    let pred_norm = normalize_answer(prediction);
    let pred: Vec<&str> = pred_norm.split_whitespace().collect();
    references
        .iter()
        .map(|r| {
            let ref_norm = normalize_answer(r.as_ref());
            let reference: Vec<&str> = ref_norm.split_whitespace().collect();
            if pred.is_empty() || reference.is_empty() {
                return 0.0;
            }
            let lcs = lcs_len(&pred, &reference) as f64;
            if lcs == 0.0 {
                return 0.0;
            }
            let p = lcs / pred.len() as f64;
            let r = lcs / reference.len() as f64;
            2.0 * p * r / (p + r)
        })
        .fold(0.0, f64::max)
}

/// Share of cited passages whose located fact mentions a gold answer. The
/// passage-title prefix of a fact is not searched. With no citations the
/// score is 1.0 when nothing was relevant and 0.0 otherwise.
pub fn citation_precision<S: AsRef<str>>(trace: &InferenceTrace, golds: &[S]) -> f64 {
    let cited = trace.citations.indices();
    if cited.is_empty() {
        return if trace.has_relevant() { 0.0 } else { 1.0 };
    }
    let hits = cited
        .iter()
        .filter(|&&i| {
            let Some(fact) = trace
                .judgments
                .iter()
                .find(|j| j.passage_index() == i)
                .and_then(|j| j.fact())
            else {
                return false;
            };
            let body = trace
                .passages
                .get(i - 1)
                .and_then(|p| {
                    fact.strip_prefix(collapse_whitespace(&p.title).as_str())
                        .and_then(|r| r.trim_start().strip_prefix('-'))
                })
                .unwrap_or(fact);
            contains_any(&normalize_answer(body), golds)
        })
        .count();
    hits as f64 / cited.len() as f64
}
