//! Layered run configuration for the CLI.
//!
//! One [`RunConfig`] carries every tunable shared across subcommands.
//! Sources merge in precedence order: built-in defaults, then a key=value
//! config file, then the environment (`GEORAG_API_KEY`), then command-line
//! flags. Each config-file key maps onto the long flag of the same name
//! with underscores turned into dashes (`k_similar` / `--k-similar`), and
//! both paths funnel through [`RunConfig::set`], so a value means the same
//! thing wherever it came from.

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::eval::EvalConfig;
use crate::mllm::{self, ModelConfig};
use crate::vecstore::{IndexConfig, IndexMode};

/// Every key accepted in config files, each mirrored by a long flag.
pub const CONFIG_KEYS: &[&str] = &[
    "base_url",
    "model",
    "temperature",
    "top_p",
    "max_tokens",
    "request_timeout_s",
    "max_retries",
    "retry_backoff_s",
    "k_similar",
    "k_dissimilar",
    "template",
    "concurrency",
    "include_raw_responses",
    "dataset",
    "mode",
    "nlist",
    "nprobe",
    "kmeans_iterations",
    "seed",
];

/// Long-flag spelling of a config key.
pub fn flag_for_key(key: &str) -> String {
    key.replace('_', "-")
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected \"key = value\", got {content:?}")]
    BadLine {
        path: std::path::PathBuf,
        line: usize,
        content: String,
    },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: expected {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Merged view of everything the subcommands need.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub request_timeout_s: u64,
    pub max_retries: u32,
    pub retry_backoff_s: f64,
    pub k_similar: usize,
    pub k_dissimilar: usize,
    pub template: String,
    pub concurrency: usize,
    pub include_raw_responses: bool,
    pub dataset: String,
    pub mode: IndexMode,
    pub nlist: u32,
    pub nprobe: u32,
    pub kmeans_iterations: u32,
    pub seed: u64,
    /// Bearer token; environment-sourced, never a config-file key.
    pub api_key: Option<String>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: "local-model".into(),
            temperature: mllm::DEFAULT_TEMPERATURE,
            top_p: mllm::DEFAULT_TOP_P,
            max_tokens: mllm::DEFAULT_MAX_TOKENS,
            request_timeout_s: mllm::DEFAULT_REQUEST_TIMEOUT_S,
            max_retries: mllm::DEFAULT_MAX_RETRIES,
            retry_backoff_s: mllm::DEFAULT_RETRY_BACKOFF_S,
            k_similar: crate::prompt::DEFAULT_K_SIMILAR,
            k_dissimilar: crate::prompt::DEFAULT_K_DISSIMILAR,
            template: crate::prompt::DEFAULT_TEMPLATE_ID.into(),
            concurrency: crate::eval::DEFAULT_CONCURRENCY,
            include_raw_responses: true,
            dataset: "dataset".into(),
            mode: IndexMode::FlatExact,
            nlist: 64,
            nprobe: 8,
            kmeans_iterations: crate::vecstore::DEFAULT_KMEANS_ITERATIONS,
            seed: 0,
            api_key: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, expected: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: expected.to_string(),
    })
}

impl RunConfig {
    /// Applies one key=value pair; both the file loader and the flag layer
    /// go through here.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "base_url" => self.base_url = value.to_string(),
            "model" => self.model = value.to_string(),
            "temperature" => self.temperature = parse(key, value, "a number")?,
            "top_p" => self.top_p = parse(key, value, "a number")?,
            "max_tokens" => self.max_tokens = parse(key, value, "a positive integer")?,
            "request_timeout_s" => {
                self.request_timeout_s = parse(key, value, "a positive integer")?
            }
            "max_retries" => self.max_retries = parse(key, value, "a non-negative integer")?,
            "retry_backoff_s" => self.retry_backoff_s = parse(key, value, "a number")?,
            "k_similar" => self.k_similar = parse(key, value, "a positive integer")?,
            "k_dissimilar" => self.k_dissimilar = parse(key, value, "a positive integer")?,
            "template" => self.template = value.to_string(),
            "concurrency" => self.concurrency = parse(key, value, "a positive integer")?,
            "include_raw_responses" => {
                self.include_raw_responses = parse(key, value, "true or false")?
            }
            "dataset" => self.dataset = value.to_string(),
            "mode" => {
                self.mode = value.parse().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: value.to_string(),
                    expected: "\"flat\" or \"ivf\"".to_string(),
                })?
            }
            "nlist" => self.nlist = parse(key, value, "a positive integer")?,
            "nprobe" => self.nprobe = parse(key, value, "a positive integer")?,
            "kmeans_iterations" => {
                self.kmeans_iterations = parse(key, value, "a positive integer")?
            }
            "seed" => self.seed = parse(key, value, "a non-negative integer")?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Merges a config file: `key = value` lines, `#` comments, blank
    /// lines ignored, later duplicates win.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine {
                    path: path.to_path_buf(),
                    line: i + 1,
                    content: raw.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::BadLine {
                    path: path.to_path_buf(),
                    line: i + 1,
                    content: raw.to_string(),
                });
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Merges environment-sourced settings.
    pub fn apply_env(&mut self) {
        if let Ok(key) = std::env::var(mllm::API_KEY_ENV) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
    }

    /// Whole-config validation, run once after all layers merged so bad
    /// input fails before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.k_similar == 0 || self.k_dissimilar == 0 {
            return Err(ConfigError::Invalid(
                "k_similar and k_dissimilar must be >= 1".into(),
            ));
        }
        if self.concurrency == 0 {
            return Err(ConfigError::Invalid("concurrency must be >= 1".into()));
        }
        if self.mode == IndexMode::Ivf {
            // Defer nlist/nprobe range checks to IndexConfig, which knows
            // the coupled constraint; surface them with config wording.
            self.index_config(1)
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            base_url: self.base_url.clone(),
            model_name: self.model.clone(),
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            request_timeout_s: self.request_timeout_s,
            max_retries: self.max_retries,
            retry_backoff_s: self.retry_backoff_s,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            dataset_name: self.dataset.clone(),
            k_similar: self.k_similar,
            k_dissimilar: self.k_dissimilar,
            template_id: self.template.clone(),
            concurrency: self.concurrency,
            include_raw_responses: self.include_raw_responses,
            timestamp_unix_ms: None,
        }
    }

    pub fn index_config(&self, dimension: u32) -> IndexConfig {
        IndexConfig {
            dimension,
            mode: self.mode,
            ivf_nlist: if self.mode == IndexMode::Ivf {
                self.nlist
            } else {
                0
            },
            ivf_nprobe: if self.mode == IndexMode::Ivf {
                self.nprobe
            } else {
                0
            },
            kmeans_iterations: self.kmeans_iterations,
            rng_seed: self.seed,
        }
    }
}
