//! Run configuration read from a TOML file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trajkit_core::backend::BackendConfig;
use trajkit_core::orchestrator::InferenceConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub log_level: String,
    pub seed: u64,
    /// Base for relative output paths.
    pub out_dir: Option<PathBuf>,
    pub inference: InferenceConfig,
    pub backend: BackendSection,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            log_level: "warn".into(),
            seed: 0,
            out_dir: None,
            inference: InferenceConfig::default(),
            backend: BackendSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: Option<String>,
    pub max_tokens: u32,
    pub timeout_ms: u64,
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for BackendSection {
    fn default() -> Self {
        let d = BackendConfig::default();
        Self {
            endpoint: d.endpoint,
            model: d.model,
            api_key_env: d.api_key_env,
            max_tokens: d.max_tokens,
            timeout_ms: d.timeout.as_millis() as u64,
            retries: d.retries,
            retry_backoff_ms: d.retry_backoff.as_millis() as u64,
            max_in_flight: d.max_in_flight,
        }
    }
}

impl BackendSection {
    pub fn to_config(&self) -> BackendConfig {
        BackendConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            max_tokens: self.max_tokens,
            timeout: Duration::from_millis(self.timeout_ms),
            retries: self.retries,
            retry_backoff: Duration::from_millis(self.retry_backoff_ms),
            max_in_flight: self.max_in_flight,
        }
    }
}

impl GlobalConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: GlobalConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if let Err(e) = self.inference.validate() {
            bail!("invalid [inference] settings: {e}");
        }
        if self.log_level.parse::<log::LevelFilter>().is_err() {
            bail!("unknown log level {:?}", self.log_level);
        }
        Ok(())
    }

    /// Joins relative output paths onto `out_dir`.
    pub fn output_path(&self, path: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }
}

/// Hex SHA-256 of the JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).unwrap_or_default();
    hex::encode(Sha256::digest(&json))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<GlobalConfig>("seed = 3\nlog_level = \"info\"").is_ok());
        assert!(toml::from_str::<GlobalConfig>("sede = 3").is_err());
        assert!(toml::from_str::<GlobalConfig>("[inference]\nkk = 2").is_err());
        assert!(toml::from_str::<GlobalConfig>("[backend]\ntimeout = 2").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: GlobalConfig = toml::from_str("[inference]\nk = 5\n[backend]\nretries = 0").unwrap();
        assert_eq!(cfg.inference.k, 5);
        assert_eq!(cfg.inference.max_passages, InferenceConfig::default().max_passages);
        assert_eq!(cfg.backend.to_config().retries, 0);
        assert_eq!(cfg.backend.to_config().timeout, BackendConfig::default().timeout);
    }

    #[test]
    fn hash_tracks_content() {
        let a = GlobalConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.inference.k = 9;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn relative_outputs_follow_out_dir() {
        let cfg = GlobalConfig {
            out_dir: Some("runs".into()),
            ..GlobalConfig::default()
        };
        assert_eq!(cfg.output_path(Path::new("a.jsonl")), Path::new("runs/a.jsonl"));
        assert_eq!(cfg.output_path(Path::new("/tmp/a.jsonl")), Path::new("/tmp/a.jsonl"));
    }
}
