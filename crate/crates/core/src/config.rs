//! Declarative pipeline configuration and its provenance hashes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::bridge::BridgeConfig;
use crate::backend::toy::ToyConfig;
use crate::backend::MaskingConfig;
use crate::corpus::{FilterRules, OdiSchema};
use crate::dictionary::DictionaryOptions;
use crate::evaluator::EvalOptions;
use crate::io::sha256_hex;
use crate::probes::ProbeOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config '{path}': {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config '{path}': {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputConfig {
    pub odi_file: PathBuf,
    pub schema: OdiSchema,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            odi_file: PathBuf::from("FLAT_CMPL.txt"),
            schema: OdiSchema::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratio: 0.9, seed: 13 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub total_examples: u64,
    pub interval_examples: u64,
    pub batch_size: usize,
    /// Seed of the single shuffle applied to the train split before a run.
    pub shuffle_seed: u64,
    /// Wrap around the train split when it is shorter than `total_examples`.
    pub cycle: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            total_examples: 400_000,
            interval_examples: 100_000,
            batch_size: 32,
            shuffle_seed: 29,
            cycle: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub output_root: PathBuf,
    pub input: InputConfig,
    pub filter: FilterRules,
    pub split: SplitConfig,
    pub dictionary: DictionaryOptions,
    pub probes: ProbeOptions,
    pub backends: Vec<String>,
    pub plan: PlanConfig,
    pub masking: MaskingConfig,
    pub eval: EvalOptions,
    pub toy: ToyConfig,
    pub bridge: BridgeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_root: PathBuf::from("out"),
            input: InputConfig::default(),
            filter: FilterRules::default(),
            split: SplitConfig::default(),
            dictionary: DictionaryOptions::default(),
            probes: ProbeOptions::default(),
            backends: vec!["toy-mlm".into()],
            plan: PlanConfig::default(),
            masking: MaskingConfig::default(),
            eval: EvalOptions::default(),
            toy: ToyConfig::default(),
            bridge: BridgeConfig::default(),
        }
    }
}

/// The part of the config that determines the corpus, dictionary and probes.
#[derive(Serialize)]
struct DataSection<'a> {
    input: &'a InputConfig,
    filter: &'a FilterRules,
    split: &'a SplitConfig,
    dictionary: &'a DictionaryOptions,
    probes: &'a ProbeOptions,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            message: e.to_string(),
        })
    }

    /// Reads a TOML file. Relative input paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: PipelineConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if let Some(dir) = path.parent() {
            if config.input.odi_file.is_relative() {
                config.input.odi_file = dir.join(&config.input.odi_file);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to toml")
    }

    /// Canonical serialization: JSON with struct fields in declaration order
    /// and map keys sorted. The output root is left out so relocating the
    /// outputs does not change any hash.
    pub fn canonical_json(&self) -> String {
        let mut hashed = self.clone();
        hashed.output_root = PathBuf::new();
        serde_json::to_string(&hashed).expect("config serializes to json")
    }

    /// Hash of the whole config; stamps evaluation and training artifacts.
    pub fn config_hash(&self) -> String {
        sha256_hex(self.canonical_json().as_bytes())
    }

    /// Hash of the data-defining sections; stamps corpus, dictionary and
    /// probe artifacts so chained stages can detect mismatches.
    pub fn data_hash(&self) -> String {
        let section = DataSection {
            input: &self.input,
            filter: &self.filter,
            split: &self.split,
            dictionary: &self.dictionary,
            probes: &self.probes,
        };
        sha256_hex(serde_json::to_string(&section).expect("serializable").as_bytes())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return bad(format!("split.ratio must lie in (0, 1), got {}", self.split.ratio));
        }
        if self.plan.interval_examples == 0 || self.plan.total_examples == 0 {
            return bad("plan totals must be positive".into());
        }
        if !self.plan.total_examples.is_multiple_of(self.plan.interval_examples) {
            return bad(format!(
                "plan.interval_examples {} does not divide plan.total_examples {}",
                self.plan.interval_examples, self.plan.total_examples
            ));
        }
        if self.plan.batch_size == 0 {
            return bad("plan.batch_size must be positive".into());
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return bad("eval.ks must be non-empty positive integers".into());
        }
        if !(0.0..=1.0).contains(&self.masking.mask_probability) {
            return bad("masking.mask_probability must lie in [0, 1]".into());
        }
        Ok(())
    }

    /// Checks that the raw complaint file exists; needed only by `ingest`.
    pub fn validate_input(&self) -> Result<(), ConfigError> {
        if !self.input.odi_file.exists() {
            return Err(ConfigError::Invalid(format!(
                "input.odi_file '{}' does not exist",
                self.input.odi_file.display()
            )));
        }
        Ok(())
    }
}
