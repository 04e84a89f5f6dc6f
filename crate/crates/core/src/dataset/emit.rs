//! Dataset JSONL and manifest files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetError, TrainingExample};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub total: usize,
    pub kinds: BTreeMap<String, usize>,
    pub sources: BTreeMap<String, usize>,
    pub config_hash: String,
}

impl DatasetManifest {
    pub fn for_examples(examples: &[TrainingExample], config_hash: &str) -> Self {
        let mut kinds = BTreeMap::new();
        let mut sources = BTreeMap::new();
        for ex in examples {
            *kinds.entry(ex.kind.as_str().to_string()).or_insert(0) += 1;
            *sources.entry(ex.source.clone()).or_insert(0) += 1;
        }
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            total: examples.len(),
            kinds,
            sources,
            config_hash: config_hash.to_string(),
        }
    }
}

/// `<path>.manifest.json` next to the dataset file.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn io(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Io(format!("{}: {e}", path.display()))
}

fn write_lines(path: &Path, examples: &[TrainingExample]) -> std::io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes examples in input order plus the manifest. On failure neither
/// file is left behind.
pub fn emit_dataset(
    examples: &[TrainingExample],
    path: &Path,
    config_hash: &str,
) -> Result<DatasetManifest, DatasetError> {
    let manifest = DatasetManifest::for_examples(examples, config_hash);
    let mpath = manifest_path(path);
    let result = write_lines(path, examples).and_then(|()| {
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&mpath, text)
    });
    if let Err(e) = result {
        let _ = fs::remove_file(path);
        let _ = fs::remove_file(&mpath);
        return Err(io(path, e));
    }
    Ok(manifest)
}

/// Reads a dataset file; errors carry the 1-based line number.
pub fn read_examples(path: &Path) -> Result<Vec<TrainingExample>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| DatasetError::Io(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}
