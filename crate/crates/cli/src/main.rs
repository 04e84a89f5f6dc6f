//! `trajkit`: index corpora, build training data, run and score the
//! multi-agent pipeline.
//!
//! Exit status: 0 on success, 1 on a domain failure, 2 on a usage or schema
//! error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::GlobalConfig;

#[derive(Debug, Parser)]
#[command(name = "trajkit", version, about = "Trajectory pipeline toolkit")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured log level.
    #[arg(long, global = true)]
    log_level: Option<String>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk a JSONL corpus and write a BM25 index.
    Index(IndexArgs),
    /// Build training examples from raw task data.
    BuildDataset(BuildArgs),
    /// Turn long examples into a replay script for the scripted backend.
    Script(ScriptArgs),
    /// Run the pipeline over a file of instructions.
    Infer(InferArgs),
    /// Score traces against references.
    Eval(EvalArgs),
    /// Check a dataset or trace file.
    Validate(ValidateArgs),
    /// Write a seeded toy corpus with matching questions and references.
    Toy(ToyArgs),
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriticChoice {
    Rule,
    Http,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Task category applied to lines that carry none.
    #[arg(long)]
    task: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, value_enum, default_value = "rule")]
    critic: CriticChoice,
    /// long, short_intent, short_locator, short_generator_plain or short_generator_facts.
    #[arg(long, default_value = "long")]
    kind: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ScriptArgs {
    /// Long-example dataset.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendChoice {
    Scripted,
    Http,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, value_enum)]
    backend: BackendChoice,
    /// Replay script, required by the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    /// JSONL with an `instruction` (or `question`) per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Exit 1 when any item fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    refs: PathBuf,
    #[arg(long)]
    task: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ValidateArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ToyArgs {
    /// Directory receiving corpus.jsonl, raw.jsonl, instructions.jsonl and refs.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    docs: usize,
    #[arg(long, default_value_t = 150)]
    words: usize,
}

/// A command failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }

    pub fn domain(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }
}

pub type CmdResult = Result<(), Failure>;

/// Tags an error with the exit status it maps to.
pub trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn domain(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(Failure::usage)
    }

    fn domain(self) -> Result<T, Failure> {
        self.map_err(Failure::domain)
    }
}

fn settings(cli: &Cli) -> Result<GlobalConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => GlobalConfig::load(path).usage()?,
        None => GlobalConfig::default(),
    };
    if let Some(level) = &cli.log_level {
        cfg.log_level = level.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    cfg.validate().usage()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CmdResult {
    let cfg = settings(&cli)?;
    env_logger::Builder::new()
        .parse_filters(&cfg.log_level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .init();
    match cli.command {
        Command::Index(a) => commands::index(&cfg, &a.corpus, &a.out),
        Command::BuildDataset(a) => commands::build_dataset(&cfg, &a),
        Command::Script(a) => commands::script(&cfg, &a.dataset, &a.out),
        Command::Infer(a) => commands::infer(&cfg, &a),
        Command::Eval(a) => commands::eval(&cfg, &a),
        Command::Validate(a) => commands::validate(&a),
        Command::Toy(a) => commands::toy(&cfg, &a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
