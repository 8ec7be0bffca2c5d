use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

/// Settings that may come from a `--config` JSON file. Command-line flags
/// override any value given here.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kg: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub emb: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub k: Option<usize>,
    pub critic_k: Option<usize>,
    pub anchors: Option<String>,
    pub intrinsic: Option<String>,
    pub frac: Option<f64>,
    pub policy: Option<String>,
    pub hops: Option<usize>,
    pub dim: Option<usize>,
    pub sampler: Option<String>,
    pub neg: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub optimizer: Option<String>,
    pub l2: Option<f64>,
    pub enrich_layers: Option<usize>,
    pub mode: Option<String>,
    pub chain: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

/// Flag if given, else config value, else the default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// Like [`pick`] for paths that must name an existing file.
pub fn existing(flag: Option<PathBuf>, config: Option<PathBuf>, what: &str) -> Result<Option<PathBuf>, CliError> {
    match flag.or(config) {
        Some(p) if !p.is_file() => Err(CliError::Validation(format!("{what} file {} does not exist", p.display()))),
        other => Ok(other),
    }
}

pub fn required(flag: Option<PathBuf>, config: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    existing(flag, config, what)?.ok_or_else(|| CliError::Validation(format!("--{what} is required")))
}
