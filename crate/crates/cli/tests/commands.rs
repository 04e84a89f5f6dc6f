use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trajkit_core::dataset::TrainingExample;
use trajkit_core::orchestrator::{read_traces, TraceRecord};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/replay")
        .join(name)
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajkit"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    stdout(&out)
}

fn path(p: PathBuf) -> String {
    p.to_str().unwrap().to_string()
}

fn write_corpus(dir: &Path) {
    let lines = [
        r#"{"title": "Rivers", "text": "The Nile is a long river in Africa."}"#,
        r#"{"title": "Mountains", "text": "Everest is the highest mountain on Earth."}"#,
        r#"{"title": "Deserts", "text": "The Sahara is a large hot desert in Africa."}"#,
    ];
    fs::write(dir.join("corpus.jsonl"), lines.join("\n") + "\n").unwrap();
}

#[test]
fn index_reports_stats_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(d);
    let text = ok(d, &["index", "--corpus", "corpus.jsonl", "--out", "a.json"]);
    assert!(text.contains("passages: 3"), "{text}");
    assert!(text.contains("avg_length:"));
    ok(d, &["index", "--corpus", "corpus.jsonl", "--out", "b.json"]);
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&run(d, &["index", "--corpus", "missing.jsonl", "--out", "i.json"])),
        2
    );
    assert!(!d.join("i.json").exists());
    assert_eq!(code(&run(d, &["index", "--corpus"])), 2);
    assert_eq!(code(&run(d, &["no-such-command"])), 2);
    assert_eq!(code(&run(d, &["validate"])), 2);

    fs::write(d.join("bad.toml"), "sead = 4\n").unwrap();
    write_corpus(d);
    let out = run(
        d,
        &[
            "--config",
            "bad.toml",
            "index",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "i.json",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sead"));
}

#[test]
fn empty_document_is_a_domain_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("corpus.jsonl"), "{\"title\": \"t\", \"text\": \"  \"}\n").unwrap();
    assert_eq!(
        code(&run(d, &["index", "--corpus", "corpus.jsonl", "--out", "i.json"])),
        1
    );
}

#[test]
fn config_out_dir_receives_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(d);
    fs::write(d.join("run.toml"), "out_dir = \"runs\"\nseed = 2\n[inference]\nk = 2\n").unwrap();
    ok(
        d,
        &[
            "--config",
            "run.toml",
            "index",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "i.json",
        ],
    );
    assert!(d.join("runs/i.json").exists());
    assert!(!d.join("i.json").exists());
}

fn toy_setup(d: &Path) {
    ok(d, &["toy", "--out", "toy"]);
    ok(d, &["index", "--corpus", "toy/corpus.jsonl", "--out", "index.json"]);
}

#[test]
fn every_kind_builds_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy_setup(d);
    for kind in [
        "long",
        "short_intent",
        "short-locator",
        "short_generator_plain",
        "short_generator_facts",
    ] {
        let out = format!("{kind}.jsonl");
        let text = ok(
            d,
            &[
                "build-dataset",
                "--task",
                "open-qa",
                "--in",
                "toy/raw.jsonl",
                "--index",
                "index.json",
                "--kind",
                kind,
                "--out",
                &out,
            ],
        );
        assert!(text.contains("examples: 10"), "{kind}: {text}");
        assert!(d.join(format!("{out}.manifest.json")).exists());
        ok(d, &["validate", "--dataset", &out]);
    }
}

#[test]
fn build_dataset_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy_setup(d);
    let build = |input: &str, task: &str, kind: &str| {
        run(
            d,
            &[
                "build-dataset",
                "--task",
                task,
                "--in",
                input,
                "--index",
                "index.json",
                "--kind",
                kind,
                "--out",
                "out.jsonl",
            ],
        )
    };
    assert_eq!(code(&build("toy/raw.jsonl", "open-qa", "longest")), 2);
    assert_eq!(code(&build("toy/raw.jsonl", "dialogue", "long")), 2);
    assert_eq!(code(&build("toy/raw.jsonl", "nonsense", "long")), 2);

    fs::write(
        d.join("raw.jsonl"),
        "{\"x\": \"What is the capital?\", \"y\": \"Paris\"}\n{\"x\": \"q\", \"y\": \" \"}\n",
    )
    .unwrap();
    let out = build("raw.jsonl", "open-qa", "short_intent");
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("raw.jsonl:2"));
    assert!(!d.join("out.jsonl").exists());
    assert!(!d.join("out.jsonl.manifest.json").exists());
}

#[test]
fn long_examples_without_hits_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy_setup(d);
    fs::write(d.join("raw.jsonl"), "{\"x\": \"zzqx wwpv\", \"y\": \"none\"}\n").unwrap();
    let text = ok(
        d,
        &[
            "build-dataset",
            "--task",
            "open-qa",
            "--in",
            "raw.jsonl",
            "--index",
            "index.json",
            "--out",
            "o.jsonl",
        ],
    );
    assert!(text.contains("examples: 0") && text.contains("skipped: 1"), "{text}");
    assert_eq!(fs::read_to_string(d.join("o.jsonl")).unwrap(), "");
}

#[test]
fn infer_replays_golden_traces() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "index",
            "--corpus",
            &path(fixture("corpus.jsonl")),
            "--out",
            "index.json",
        ],
    );
    let text = ok(
        d,
        &[
            "infer",
            "--index",
            "index.json",
            "--backend",
            "scripted",
            "--script",
            &path(fixture("script.jsonl")),
            "--input",
            &path(fixture("instructions.jsonl")),
            "--out",
            "traces.jsonl",
        ],
    );
    assert!(text.contains("failed: 0"));
    assert!(text.contains("latency generator"));
    let records = read_traces(&d.join("traces.jsonl")).unwrap();
    let TraceRecord::Trace(war) = &records[0] else { panic!() };
    assert_eq!(
        war.trajectory.to_text(),
        fs::read_to_string(fixture("war_of_1812.trajectory.txt")).unwrap()
    );

    ok(
        d,
        &[
            "eval",
            "--traces",
            "traces.jsonl",
            "--refs",
            &path(fixture("refs.jsonl")),
            "--task",
            "popqa",
            "--out",
            "report.json",
        ],
    );
    assert_eq!(
        fs::read_to_string(d.join("report.json")).unwrap(),
        fs::read_to_string(fixture("report.json")).unwrap()
    );
    ok(d, &["validate", "--traces", "traces.jsonl"]);
}

#[test]
fn strict_flag_controls_exit_on_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "index",
            "--corpus",
            &path(fixture("corpus.jsonl")),
            "--out",
            "index.json",
        ],
    );
    fs::write(d.join("in.jsonl"), "{\"instruction\": \"unscripted question\"}\n").unwrap();
    fs::write(d.join("empty_script.jsonl"), "").unwrap();
    let args = [
        "infer",
        "--index",
        "index.json",
        "--backend",
        "scripted",
        "--script",
        "empty_script.jsonl",
        "--input",
        "in.jsonl",
        "--out",
        "t.jsonl",
    ];
    let text = ok(d, &args);
    assert!(text.contains("failed: 1"));
    assert!(matches!(
        read_traces(&d.join("t.jsonl")).unwrap()[0],
        TraceRecord::Failure(_)
    ));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(code(&run(d, &strict)), 1);

    let without_script = run(
        d,
        &[
            "infer",
            "--index",
            "index.json",
            "--backend",
            "scripted",
            "--input",
            "in.jsonl",
            "--out",
            "t.jsonl",
        ],
    );
    assert_eq!(code(&without_script), 2);
}

#[test]
fn unreachable_http_backend_fails_per_item() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "index",
            "--corpus",
            &path(fixture("corpus.jsonl")),
            "--out",
            "index.json",
        ],
    );
    fs::write(
        d.join("in.jsonl"),
        "{\"instruction\": \"a\"}\n{\"instruction\": \"b\"}\n",
    )
    .unwrap();
    fs::write(
        d.join("cfg.toml"),
        "[backend]\nendpoint = \"http://127.0.0.1:9/v1/chat/completions\"\nretries = 0\ntimeout_ms = 2000\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "--config",
            "cfg.toml",
            "infer",
            "--index",
            "index.json",
            "--backend",
            "http",
            "--input",
            "in.jsonl",
            "--out",
            "t.jsonl",
        ],
    );
    let records = read_traces(&d.join("t.jsonl")).unwrap();
    assert_eq!(records.len(), 2);
    for r in records {
        let TraceRecord::Failure(f) = r else {
            panic!("expected failure")
        };
        assert_eq!(f.error.kind, "BackendUnavailable");
    }
}

#[test]
fn eval_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let refs = path(fixture("refs.jsonl"));
    fs::write(d.join("empty.jsonl"), "").unwrap();
    let table = ok(
        d,
        &[
            "eval",
            "--traces",
            "empty.jsonl",
            "--refs",
            &refs,
            "--task",
            "popqa",
            "--out",
            "r.json",
        ],
    );
    assert!(table.contains("popqa"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["examples"], 0);

    assert_eq!(
        code(&run(
            d,
            &[
                "eval",
                "--traces",
                "empty.jsonl",
                "--refs",
                &refs,
                "--task",
                "arc-c",
                "--out",
                "r.json"
            ]
        )),
        2
    );
    assert_eq!(
        code(&run(
            d,
            &[
                "eval",
                "--traces",
                "empty.jsonl",
                "--refs",
                &refs,
                "--task",
                "bogus",
                "--out",
                "r.json"
            ]
        )),
        2
    );
    let failure =
        r#"{"instruction":"not in refs","error":{"stage":"generator","kind":"BackendUnavailable","message":"x"}}"#;
    fs::write(d.join("other.jsonl"), format!("{failure}\n")).unwrap();
    assert_eq!(
        code(&run(
            d,
            &[
                "eval",
                "--traces",
                "other.jsonl",
                "--refs",
                &refs,
                "--task",
                "popqa",
                "--out",
                "r.json"
            ]
        )),
        2
    );
    fs::write(d.join("junk.jsonl"), "{\"nope\": 1}\n").unwrap();
    assert_eq!(
        code(&run(
            d,
            &[
                "eval",
                "--traces",
                "junk.jsonl",
                "--refs",
                &refs,
                "--task",
                "popqa",
                "--out",
                "r.json"
            ]
        )),
        2
    );
}

fn built_dataset(d: &Path) -> Vec<String> {
    toy_setup(d);
    ok(
        d,
        &[
            "build-dataset",
            "--task",
            "open-qa",
            "--in",
            "toy/raw.jsonl",
            "--index",
            "index.json",
            "--out",
            "long.jsonl",
        ],
    );
    fs::read_to_string(d.join("long.jsonl"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

#[test]
fn validate_locates_a_corrupted_end_token() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut lines = built_dataset(d);
    let mut ex: TrainingExample = serde_json::from_str(&lines[3]).unwrap();
    ex.output = ex.output.replacen("</eol>", "</eoX>", 1);
    lines[3] = serde_json::to_string(&ex).unwrap();
    fs::write(d.join("bad.jsonl"), lines.join("\n") + "\n").unwrap();
    let out = run(d, &["validate", "--dataset", "bad.jsonl"]);
    assert_eq!(code(&out), 1);
    let reported: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert_eq!(reported.len(), 1, "{reported:?}");
    assert!(reported[0].contains("line 4"), "{reported:?}");
}

#[test]
fn validate_rejects_supervised_retrieval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut lines = built_dataset(d);
    let mut ex: TrainingExample = serde_json::from_str(&lines[0]).unwrap();
    let end = ex.output.chars().count();
    ex.loss_spans = vec![(0, end)];
    lines[0] = serde_json::to_string(&ex).unwrap();
    fs::write(d.join("bad.jsonl"), lines.join("\n") + "\n").unwrap();
    let out = run(d, &["validate", "--dataset", "bad.jsonl"]);
    assert_eq!(code(&out), 1);
    let text = stdout(&out);
    assert!(text.contains("line 1") && text.contains("retrieval"), "{text}");
}

#[test]
fn validate_traces_reports_broken_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "index",
            "--corpus",
            &path(fixture("corpus.jsonl")),
            "--out",
            "index.json",
        ],
    );
    ok(
        d,
        &[
            "infer",
            "--index",
            "index.json",
            "--backend",
            "scripted",
            "--script",
            &path(fixture("script.jsonl")),
            "--input",
            &path(fixture("instructions.jsonl")),
            "--out",
            "t.jsonl",
        ],
    );
    let text = fs::read_to_string(d.join("t.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[1] = lines[1].replacen("</eog>", "</eoq>", 1);
    fs::write(d.join("bad.jsonl"), lines.join("\n") + "\n").unwrap();
    let out = run(d, &["validate", "--traces", "bad.jsonl"]);
    assert_eq!(code(&out), 1);
    let reported = stdout(&out);
    assert_eq!(reported.lines().count(), 1, "{reported}");
    assert!(reported.contains("line 2"));
}

#[test]
fn toy_output_follows_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["toy", "--out", "a", "--seed", "3"]);
    ok(d, &["toy", "--out", "b", "--seed", "3"]);
    ok(d, &["toy", "--out", "c", "--seed", "4"]);
    let read = |p: &str| fs::read(d.join(p).join("corpus.jsonl")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    for f in ["raw.jsonl", "instructions.jsonl", "refs.jsonl"] {
        assert_eq!(fs::read_to_string(d.join("a").join(f)).unwrap().lines().count(), 10);
    }
}
