//! Subcommand bodies.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use trajkit_core::backend::{Backend, HttpBackend, ScriptedBackend};
use trajkit_core::dataset::{
    build_example, check_example, emit_dataset, manifest_path, read_examples, Critic, DatasetError, ExampleKind,
    LlmCritic, RawExample, RuleCritic, TaskCategory, TrainingExample,
};
use trajkit_core::evaluation::{apply_task_instruction, evaluate, read_references, render_table, EvalTask};
use trajkit_core::grammar::{parse_trajectory, AgentKind, TokenKind};
use trajkit_core::orchestrator::{
    read_traces, replay_script, run_batch, validate_trace, write_traces, InferenceConfig, StepTimings, TraceRecord,
};
use trajkit_core::retrieval::{chunk_corpus, CorpusIndex, Document};
use trajkit_core::toy::toy_entries;

use crate::config::{config_hash, GlobalConfig};
use crate::{
    BackendChoice, BuildArgs, Classify, CmdResult, CriticChoice, EvalArgs, Failure, InferArgs, ToyArgs, ValidateArgs,
};

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .usage()
}

/// Non-empty lines with their 1-based numbers.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, Failure> {
    let text = read_input(path)?;
    numbered_lines(&text)
        .map(|(n, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{}:{n}", path.display()))
                .usage()
        })
        .collect()
}

fn prepare_output(cfg: &GlobalConfig, path: &Path) -> Result<PathBuf, Failure> {
    let out = cfg.output_path(path);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))
            .domain()?;
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn load_index(path: &Path) -> Result<CorpusIndex, Failure> {
    CorpusIndex::load(path).usage()
}

pub fn index(cfg: &GlobalConfig, corpus: &Path, out: &Path) -> CmdResult {
    let docs: Vec<Document> = parse_jsonl(corpus)?;
    let passages = chunk_corpus(&docs).domain()?;
    let index = CorpusIndex::build(passages).domain()?;
    let out = prepare_output(cfg, out)?;
    index.save(&out).domain()?;
    println!("documents: {}", docs.len());
    println!("passages: {}", index.total_docs());
    println!("terms: {}", index.terms().count());
    println!("avg_length: {:.2}", index.avg_doc_length());
    Ok(())
}

fn read_raw(path: &Path, task: TaskCategory) -> Result<Vec<(usize, RawExample)>, Failure> {
    let text = read_input(path)?;
    let mut out = Vec::new();
    for (n, line) in numbered_lines(&text) {
        let at = || format!("{}:{n}", path.display());
        let mut value: serde_json::Value = serde_json::from_str(line).with_context(at).usage()?;
        if let Some(obj) = value.as_object_mut() {
            obj.entry("task").or_insert_with(|| task.as_str().into());
        }
        let raw: RawExample = serde_json::from_value(value).with_context(at).usage()?;
        if raw.task != task {
            return Err(Failure::usage(anyhow!(
                "{}: task {} does not match --task {task}",
                at(),
                raw.task
            )));
        }
        out.push((n, raw));
    }
    Ok(out)
}

#[derive(Serialize)]
struct BuildSettings<'a> {
    task: TaskCategory,
    kind: ExampleKind,
    critic: &'a str,
    inference: &'a InferenceConfig,
}

pub fn build_dataset(cfg: &GlobalConfig, a: &BuildArgs) -> CmdResult {
    let task = TaskCategory::parse(&a.task)
        .ok_or_else(|| anyhow!("unknown task {:?}", a.task))
        .usage()?;
    let kind = ExampleKind::parse(&a.kind)
        .ok_or_else(|| anyhow!("unknown kind {:?}", a.kind))
        .usage()?;
    let index = load_index(&a.index)?;
    let raws = read_raw(&a.input, task)?;
    let critic: Box<dyn Critic> = match a.critic {
        CriticChoice::Rule => Box::new(RuleCritic),
        CriticChoice::Http => Box::new(LlmCritic::new(HttpBackend::new(cfg.backend.to_config()).usage()?)),
    };

    let mut examples = Vec::new();
    let mut skipped = 0usize;
    for (n, raw) in &raws {
        match build_example(kind, raw, &*critic, &index, &cfg.inference) {
            Ok(ex) => examples.push(ex),
            Err(e @ (DatasetError::NoPassages | DatasetError::NoRelevantFacts)) => {
                log::warn!("{}:{n}: skipped: {e}", a.input.display());
                skipped += 1;
            }
            Err(e) => return Err(Failure::domain(anyhow!("{}:{n}: {e}", a.input.display()))),
        }
    }

    let settings = BuildSettings {
        task,
        kind,
        critic: match a.critic {
            CriticChoice::Rule => "rule",
            CriticChoice::Http => "http",
        },
        inference: &cfg.inference,
    };
    let out = prepare_output(cfg, &a.out)?;
    let manifest = emit_dataset(&examples, &out, &config_hash(&settings)).domain()?;
    println!("examples: {}", manifest.total);
    println!("skipped: {skipped}");
    println!("manifest: {}", manifest_path(&out).display());
    Ok(())
}

pub fn script(cfg: &GlobalConfig, dataset: &Path, out: &Path) -> CmdResult {
    if !dataset.exists() {
        return Err(Failure::usage(anyhow!("cannot read {}", dataset.display())));
    }
    let examples = read_examples(dataset).usage()?;
    let suffix = format!("{}\n", TokenKind::InstructionEnd);
    let mut entries = Vec::new();
    for (i, ex) in examples.iter().enumerate() {
        let at = || format!("{} example {}", dataset.display(), i + 1);
        if ex.kind != ExampleKind::Long {
            return Err(Failure::usage(anyhow!(
                "{}: expected a long example, found {}",
                at(),
                ex.kind
            )));
        }
        let instruction = ex
            .input
            .strip_suffix(&suffix)
            .ok_or_else(|| anyhow!("{}: input does not end with {}", at(), TokenKind::InstructionEnd))
            .usage()?;
        let trajectory = parse_trajectory(&ex.output).with_context(at).domain()?;
        entries.extend(replay_script(instruction, &trajectory));
    }
    let out = prepare_output(cfg, out)?;
    write_jsonl(&out, &entries).domain()?;
    println!("entries: {}", entries.len());
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InferInput {
    #[serde(alias = "question")]
    instruction: String,
    /// Evaluation task whose instruction is prepended.
    #[serde(default)]
    task: Option<EvalTask>,
}

fn run_all<B: Backend + ?Sized>(
    instructions: &[String],
    index: &CorpusIndex,
    backend: &B,
    cfg: &InferenceConfig,
) -> Vec<(TraceRecord, Option<StepTimings>)> {
    instructions
        .iter()
        .zip(run_batch(instructions, index, backend, cfg))
        .map(|(x, r)| {
            let timings = r.as_ref().ok().map(|t| t.timings.clone());
            if let Err(e) = &r {
                log::warn!("{x:?}: {e}");
            }
            (TraceRecord::from_result(x, r), timings)
        })
        .collect()
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

pub fn infer(cfg: &GlobalConfig, a: &InferArgs) -> CmdResult {
    let index = load_index(&a.index)?;
    let inputs: Vec<InferInput> = parse_jsonl(&a.input)?;
    let instructions: Vec<String> = inputs
        .into_iter()
        .map(|i| match i.task {
            Some(task) => apply_task_instruction(task, &i.instruction),
            None => i.instruction,
        })
        .collect();

    let results = match a.backend {
        BackendChoice::Scripted => {
            let path = a
                .script
                .as_ref()
                .ok_or_else(|| anyhow!("--script is required with the scripted backend"))
                .usage()?;
            if !path.exists() {
                return Err(Failure::usage(anyhow!("cannot read {}", path.display())));
            }
            let backend = ScriptedBackend::load(path).usage()?;
            run_all(&instructions, &index, &backend, &cfg.inference)
        }
        BackendChoice::Http => {
            let backend = HttpBackend::new(cfg.backend.to_config()).usage()?;
            run_all(&instructions, &index, &backend, &cfg.inference)
        }
    };

    let records: Vec<TraceRecord> = results.iter().map(|(r, _)| r.clone()).collect();
    let out = prepare_output(cfg, &a.out)?;
    write_traces(&out, &records)
        .with_context(|| format!("writing {}", out.display()))
        .domain()?;

    let failed = records.iter().filter(|r| matches!(r, TraceRecord::Failure(_))).count();
    let flagged = records
        .iter()
        .filter(|r| matches!(r, TraceRecord::Trace(t) if t.is_flagged()))
        .count();
    println!("items: {}", records.len());
    println!("succeeded: {}", records.len() - failed);
    println!("failed: {failed}");
    println!("flagged: {flagged}");
    for step in AgentKind::ALL {
        let times: Vec<Duration> = results.iter().filter_map(|(_, t)| t.as_ref()?.get(step)).collect();
        if times.is_empty() {
            continue;
        }
        let total: Duration = times.iter().sum();
        let max = times.iter().max().copied().unwrap_or_default();
        println!(
            "latency {step}: n={} mean={:.3}ms max={:.3}ms",
            times.len(),
            ms(total) / times.len() as f64,
            ms(max)
        );
    }
    if a.strict && failed > 0 {
        return Err(Failure::domain(anyhow!("{failed} of {} items failed", records.len())));
    }
    Ok(())
}

pub fn eval(cfg: &GlobalConfig, a: &EvalArgs) -> CmdResult {
    let task = EvalTask::parse(&a.task).usage()?;
    if !a.traces.exists() {
        return Err(Failure::usage(anyhow!("cannot read {}", a.traces.display())));
    }
    let records = read_traces(&a.traces).map_err(|e| Failure::usage(anyhow!(e)))?;
    let refs = read_references(&a.refs, task).usage()?;
    let report = evaluate(&records, &refs, task).usage()?;
    let out = prepare_output(cfg, &a.out)?;
    let mut json = serde_json::to_string_pretty(&report).domain()?;
    json.push('\n');
    fs::write(&out, json)
        .with_context(|| format!("writing {}", out.display()))
        .domain()?;
    print!("{}", render_table(&report));
    Ok(())
}

fn dataset_violations(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (n, line) in numbered_lines(text) {
        match serde_json::from_str::<TrainingExample>(line) {
            Ok(ex) => out.extend(check_example(&ex).into_iter().map(|v| format!("line {n}: {v}"))),
            Err(e) => out.push(format!("line {n}: {e}")),
        }
    }
    out
}

fn trace_violations(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (n, line) in numbered_lines(text) {
        match serde_json::from_str::<TraceRecord>(line) {
            Ok(TraceRecord::Trace(t)) => out.extend(validate_trace(&t).into_iter().map(|v| format!("line {n}: {v}"))),
            Ok(TraceRecord::Failure(_)) => {}
            Err(_) => {
                let detail = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("trajectory")?.as_str().map(str::to_string))
                    .and_then(|t| parse_trajectory(&t).err())
                    .map_or_else(|| "not a trace or failure record".to_string(), |e| e.to_string());
                out.push(format!("line {n}: {detail}"));
            }
        }
    }
    out
}

pub fn validate(a: &ValidateArgs) -> CmdResult {
    let (path, violations) = match (&a.dataset, &a.traces) {
        (Some(p), _) => (p, dataset_violations(&read_input(p)?)),
        (None, Some(p)) => (p, trace_violations(&read_input(p)?)),
        (None, None) => return Err(Failure::usage(anyhow!("pass --dataset or --traces"))),
    };
    for v in &violations {
        println!("{}: {v}", path.display());
    }
    if violations.is_empty() {
        println!("{}: ok", path.display());
        Ok(())
    } else {
        Err(Failure::domain(anyhow!(
            "{} violation(s) in {}",
            violations.len(),
            path.display()
        )))
    }
}

#[derive(Serialize)]
struct InstructionLine<'a> {
    instruction: &'a str,
}

pub fn toy(cfg: &GlobalConfig, a: &ToyArgs) -> CmdResult {
    let entries = toy_entries(cfg.seed, a.docs, a.words);
    let dir = cfg.output_path(&a.out);
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .domain()?;
    let docs: Vec<&Document> = entries.iter().map(|e| &e.document).collect();
    let raws: Vec<RawExample> = entries.iter().map(|e| e.raw_example()).collect();
    let questions: Vec<String> = entries.iter().map(|e| e.question()).collect();
    let instructions: Vec<InstructionLine> = questions.iter().map(|q| InstructionLine { instruction: q }).collect();
    let refs: Vec<_> = entries.iter().map(|e| e.reference()).collect();
    write_jsonl(&dir.join("corpus.jsonl"), &docs).domain()?;
    write_jsonl(&dir.join("raw.jsonl"), &raws).domain()?;
    write_jsonl(&dir.join("instructions.jsonl"), &instructions).domain()?;
    write_jsonl(&dir.join("refs.jsonl"), &refs).domain()?;
    println!("documents: {}", entries.len());
    println!("directory: {}", dir.display());
    Ok(())
}
