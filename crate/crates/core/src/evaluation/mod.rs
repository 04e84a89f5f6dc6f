//! Scoring of pipeline traces against reference answers.

mod metrics;

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::TraceRecord;

pub use metrics::{citation_precision, match_accuracy, normalize_answer, rouge_l, str_em};

pub const ACC: &str = "acc";
pub const STR_EM: &str = "str_em";
pub const ROUGE_L: &str = "rouge_l";
pub const CITATION_PRECISION: &str = "citation_precision";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("reference line {line}: {message}")]
    InvalidReference { line: usize, message: String },
    #[error("reference line {line} has task {found}, expected {expected}")]
    TaskMismatch {
        line: usize,
        expected: EvalTask,
        found: EvalTask,
    },
    #[error("no reference for trace instruction {0:?}")]
    UnmatchedTrace(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvalTask {
    #[serde(rename = "pubhealth")]
    PubHealth,
    #[serde(rename = "arc-c")]
    ArcC,
    #[serde(rename = "popqa")]
    PopQa,
    #[serde(rename = "squad")]
    Squad,
    #[serde(rename = "asqa")]
    Asqa,
}

impl EvalTask {
    pub const ALL: [EvalTask; 5] = [
        EvalTask::PubHealth,
        EvalTask::ArcC,
        EvalTask::PopQa,
        EvalTask::Squad,
        EvalTask::Asqa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalTask::PubHealth => "pubhealth",
            EvalTask::ArcC => "arc-c",
            EvalTask::PopQa => "popqa",
            EvalTask::Squad => "squad",
            EvalTask::Asqa => "asqa",
        }
    }

    pub fn parse(s: &str) -> Result<Self, EvalError> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| EvalError::UnknownTask(s.to_string()))
    }

    /// Zero-shot instruction placed before the question, if the task has one.
    pub fn instruction(self) -> Option<&'static str> {
        match self {
            EvalTask::PubHealth => {
                Some("Is the following statement correct or not? Say true if it's correct; otherwise, say false.")
            }
            EvalTask::ArcC => Some("Given four answer candidates, choose the best answer choice."),
            EvalTask::Asqa => Some(
                "Answer the following question. The question may be ambiguous and have multiple correct answers, \
                 and in that case, you have to provide a long-form answer including all correct answers.",
            ),
            EvalTask::PopQa | EvalTask::Squad => None,
        }
    }

    /// Metrics reported for this task besides citation precision.
    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            EvalTask::Asqa => &[STR_EM, ROUGE_L],
            _ => &[ACC],
        }
    }
}

impl fmt::Display for EvalTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Prefixes the task instruction, separated by a blank line.
pub fn apply_task_instruction(task: EvalTask, question: &str) -> String {
    match task.instruction() {
        Some(instr) => format!("{instr}\n\n{question}"),
        None => question.to_string(),
    }
}

/// A gold answer, or a group of interchangeable answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoldAnswer {
    One(String),
    AnyOf(Vec<String>),
}

impl GoldAnswer {
    pub fn members(&self) -> &[String] {
        match self {
            GoldAnswer::One(s) => std::slice::from_ref(s),
            GoldAnswer::AnyOf(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalExample {
    pub question: String,
    pub gold_answers: Vec<GoldAnswer>,
    pub task: EvalTask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_form_refs: Option<Vec<String>>,
}

impl EvalExample {
    pub fn validate(&self) -> Result<(), String> {
        if self.gold_answers.is_empty() || self.gold_answers.iter().any(|g| g.members().is_empty()) {
            return Err("gold_answers must be non-empty".into());
        }
        match (self.task, &self.long_form_refs) {
            (EvalTask::Asqa, Some(refs)) if !refs.is_empty() => Ok(()),
            (EvalTask::Asqa, _) => Err("asqa references need long_form_refs".into()),
            (_, Some(_)) => Err("long_form_refs are only valid for asqa".into()),
            (_, None) => Ok(()),
        }
    }

    fn flat_golds(&self) -> Vec<&str> {
        self.gold_answers
            .iter()
            .flat_map(|g| g.members().iter().map(String::as_str))
            .collect()
    }

    fn answer_sets(&self) -> Vec<Vec<&str>> {
        self.gold_answers
            .iter()
            .map(|g| g.members().iter().map(String::as_str).collect())
            .collect()
    }
}

/// Reads reference JSONL, validating every line against `task`.
pub fn read_references(path: &Path, task: EvalTask) -> Result<Vec<EvalExample>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let ex: EvalExample = serde_json::from_str(line).map_err(|e| EvalError::InvalidReference {
            line: line_no,
            message: e.to_string(),
        })?;
        if ex.task != task {
            return Err(EvalError::TaskMismatch {
                line: line_no,
                expected: task,
                found: ex.task,
            });
        }
        ex.validate()
            .map_err(|message| EvalError::InvalidReference { line: line_no, message })?;
        out.push(ex);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub question: String,
    pub prediction: String,
    pub failed: bool,
    pub citations: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: EvalTask,
    pub examples: usize,
    pub failed: usize,
    /// Means of the per-row values; 0 when there are no rows.
    pub metrics: BTreeMap<String, f64>,
    pub rows: Vec<EvalRow>,
}

fn score_row(task: EvalTask, reference: &EvalExample, record: &TraceRecord) -> EvalRow {
    let mut metrics = BTreeMap::new();
    let (prediction, failed, citations) = match record {
        TraceRecord::Trace(t) => (t.answer.clone(), false, t.citations.len()),
        TraceRecord::Failure(_) => (String::new(), true, 0),
    };
    for &name in task.metrics() {
        let value = if failed {
            0.0
        } else {
            match name {
                ACC => match_accuracy(&prediction, &reference.flat_golds()),
                STR_EM => str_em(&prediction, &reference.answer_sets()),
                _ => rouge_l(&prediction, reference.long_form_refs.as_deref().unwrap_or_default()),
            }
        };
        metrics.insert(name.to_string(), value);
    }
    let cp = match record {
        TraceRecord::Trace(t) => citation_precision(t, &reference.flat_golds()),
        TraceRecord::Failure(_) => 0.0,
    };
    metrics.insert(CITATION_PRECISION.to_string(), cp);
    EvalRow {
        question: reference.question.clone(),
        prediction,
        failed,
        citations,
        metrics,
    }
}

/// Scores each trace against the reference whose question equals the
/// trace instruction, with or without the task instruction prefix. Failed
/// traces score 0 on every metric.
pub fn evaluate(records: &[TraceRecord], references: &[EvalExample], task: EvalTask) -> Result<EvalReport, EvalError> {
    let mut by_question: HashMap<String, &EvalExample> = HashMap::new();
    for r in references {
        by_question.entry(r.question.clone()).or_insert(r);
        by_question
            .entry(apply_task_instruction(task, &r.question))
            .or_insert(r);
    }
    let mut rows = Vec::with_capacity(records.len());
    for record in records {
        let reference = by_question
            .get(record.instruction())
            .ok_or_else(|| EvalError::UnmatchedTrace(record.instruction().to_string()))?;
        rows.push(score_row(task, reference, record));
    }
    let mut metrics = BTreeMap::new();
    for name in task.metrics().iter().chain([&CITATION_PRECISION]) {
        let sum: f64 = rows.iter().map(|r| r.metrics[*name]).sum();
        let mean = if rows.is_empty() { 0.0 } else { sum / rows.len() as f64 };
        metrics.insert(name.to_string(), mean);
    }
    Ok(EvalReport {
        task,
        examples: rows.len(),
        failed: rows.iter().filter(|r| r.failed).count(),
        metrics,
        rows,
    })
}

fn column_label(metric: &str) -> &str {
    match metric {
        ACC => "Acc",
        STR_EM => "Str_EM",
        ROUGE_L => "R-L",
        CITATION_PRECISION => "Cite-P",
        other => other,
    }
}

/// Plain-text table of aggregate metrics in percent.
pub fn render_table(report: &EvalReport) -> String {
    let names: Vec<&str> = report
        .task
        .metrics()
        .iter()
        .copied()
        .chain([CITATION_PRECISION])
        .collect();
    let mut out = format!("{:<10} {:>6} {:>6}", "task", "n", "failed");
    for name in &names {
        let _ = write!(out, " {:>8}", column_label(name));
    }
    out.push('\n');
    let _ = write!(
        out,
        "{:<10} {:>6} {:>6}",
        report.task.as_str(),
        report.examples,
        report.failed
    );
    for name in &names {
        let _ = write!(out, " {:>8.2}", report.metrics[*name] * 100.0);
    }
    out.push('\n');
    out
}
