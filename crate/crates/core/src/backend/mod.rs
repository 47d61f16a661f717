//! Contract every masked language model implementation satisfies, plus the
//! shipped implementations: a table-driven [`mock`], a small trainable [`toy`]
//! model and a [`bridge`] to pretrained transformer checkpoints.

pub mod bridge;
pub mod mock;
pub mod toy;
pub mod wordpiece;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("probe must contain exactly one {MASK}, found {found}")]
    MaskCount { found: usize },
    #[error("sequence of {len} tokens exceeds the backend limit of {max}")]
    TooLong { len: usize, max: usize },
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("checkpoint '{handle}': {message}")]
    Checkpoint { handle: String, message: String },
    #[error("score vector has {scores} scores for {vocabulary} candidates")]
    ScoreLength { scores: usize, vocabulary: usize },
    #[error("non-finite score for candidate '{0}'")]
    NonFinite(String),
    #[error("duplicate candidate token '{0}'")]
    DuplicateCandidate(String),
    #[error("word index {index} out of range for a {len}-word sentence")]
    WordIndex { index: usize, len: usize },
    #[error("backend process: {0}")]
    Bridge(String),
    #[error("no score table for probe '{0}'")]
    UnknownProbe(String),
    #[error("unknown backend '{0}'")]
    UnknownBackend(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenizerFamily {
    WordPiece,
    SentencePiece,
    BytePair,
    /// Whole whitespace-separated words; used by the mock.
    Whitespace,
}

/// Ordered candidate tokens with an index for lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self, BackendError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(BackendError::DuplicateCandidate(t.clone()));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone)]
pub struct BackendDescriptor {
    pub backend_id: String,
    pub tokenizer_family: TokenizerFamily,
    pub candidate_vocabulary: Arc<Vocabulary>,
    pub max_sequence_length: usize,
    /// Informational.
    pub parameter_count: u64,
}

/// Scores for every candidate token at the mask position. Higher is better.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskScoreVector<S> {
    pub probe_id: String,
    vocabulary: Arc<Vocabulary>,
    scores: Vec<S>,
}

impl<S: Scalar> MaskScoreVector<S> {
    pub fn new(probe_id: impl Into<String>, vocabulary: Arc<Vocabulary>, scores: Vec<S>) -> Result<Self, BackendError> {
        if scores.len() != vocabulary.len() {
            return Err(BackendError::ScoreLength {
                scores: scores.len(),
                vocabulary: vocabulary.len(),
            });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(BackendError::NonFinite(vocabulary.token(i).to_owned()));
        }
        Ok(MaskScoreVector {
            probe_id: probe_id.into(),
            vocabulary,
            scores,
        })
    }
}

impl<S> MaskScoreVector<S> {
    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn scores(&self) -> &[S] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn score(&self, token: &str) -> Option<&S> {
        self.vocabulary.id(token).map(|i| &self.scores[i])
    }

    /// Applies `f` to every score, keeping the candidate order.
    pub fn map_scores<T>(&self, f: impl Fn(&S) -> T) -> MaskScoreVector<T> {
        MaskScoreVector {
            probe_id: self.probe_id.clone(),
            vocabulary: Arc::clone(&self.vocabulary),
            scores: self.scores.iter().map(f).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskingConfig {
    /// Fraction of maskable tokens replaced by the mask token per sequence.
    pub mask_probability: f64,
    pub seed: u64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            mask_probability: 0.15,
            seed: 17,
        }
    }
}

/// Where a saved checkpoint lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHandle {
    pub tag: String,
    pub path: PathBuf,
}

impl std::fmt::Display for CheckpointHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.tag, self.path.display())
    }
}

/// A masked language model usable for probing and continual pre-training.
///
/// Instances are single-writer: `train_mlm_step` and `load_checkpoint` take
/// `&mut self`. Inference takes `&self` but callers only fan it out across
/// threads when [`read_safe`](Self::read_safe) is true.
pub trait MaskedLm: Send + Sync {
    type Scalar: Scalar;

    fn descriptor(&self) -> &BackendDescriptor;

    /// Tokens for `text` with no special tokens added.
    fn tokenize(&self, text: &str) -> Result<Vec<String>, BackendError>;

    /// The single candidate token covering `words[index]` when the sentence is
    /// tokenized as a whole, or `None` when that word spans several tokens.
    fn mask_target(&self, words: &[String], index: usize) -> Result<Option<String>, BackendError>;

    /// Scores every candidate at the mask of a `[CLS] … [MASK] … [SEP]` probe.
    fn predict_masked(&self, probe_id: &str, rendered: &str) -> Result<MaskScoreVector<Self::Scalar>, BackendError>;

    fn predict_batch(&self, probes: &[(&str, &str)]) -> Vec<Result<MaskScoreVector<Self::Scalar>, BackendError>> {
        probes
            .iter()
            .map(|(id, rendered)| self.predict_masked(id, rendered))
            .collect()
    }

    /// One update on `batch`; returns the batch MLM loss and adds `batch.len()`
    /// to the seen-example counter.
    fn train_mlm_step(&mut self, batch: &[String], masking: &MaskingConfig) -> Result<Self::Scalar, BackendError>;

    fn seen_examples(&self) -> u64;

    fn save_checkpoint(&self, dir: &Path, tag: &str) -> Result<CheckpointHandle, BackendError>;

    fn load_checkpoint(&mut self, handle: &CheckpointHandle) -> Result<(), BackendError>;

    /// Whether concurrent `predict_masked` calls are allowed.
    fn read_safe(&self) -> bool {
        false
    }
}

/// Checks the one-mask rule and returns the whitespace tokens of a rendered
/// probe together with the position of the mask among them.
pub fn split_rendered(rendered: &str) -> Result<(Vec<&str>, usize), BackendError> {
    let words: Vec<&str> = rendered.split_whitespace().collect();
    let masks: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, w)| **w == MASK)
        .map(|(i, _)| i)
        .collect();
    match masks.as_slice() {
        [i] => Ok((words, *i)),
        _ => Err(BackendError::MaskCount { found: masks.len() }),
    }
}

/// Known identifiers for pretrained checkpoints served through [`bridge`].
pub const PRETRAINED_BACKENDS: &[(&str, TokenizerFamily)] = &[
    ("bert-base-uncased", TokenizerFamily::WordPiece),
    ("bert-large-uncased", TokenizerFamily::WordPiece),
    ("roberta-base", TokenizerFamily::BytePair),
    ("distilbert-base-uncased", TokenizerFamily::WordPiece),
    ("albert-xxlarge-v2", TokenizerFamily::SentencePiece),
];
