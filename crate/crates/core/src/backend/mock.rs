//! Backend that returns configured score tables verbatim.
//!
//! The candidate vocabulary is the sorted union of all tokens in all tables.
//! Candidates missing from a probe's table receive the fill score, which is one
//! below the smallest configured score unless set explicitly.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    split_rendered, BackendDescriptor, BackendError, CheckpointHandle, MaskScoreVector, MaskedLm, MaskingConfig,
    TokenizerFamily, Vocabulary,
};
use crate::Scalar;

pub const MOCK_BACKEND_ID: &str = "mock";

/// `probe_id → {token: score}`
pub type ScoreTables = BTreeMap<String, BTreeMap<String, f64>>;

#[derive(Debug, Clone)]
pub struct MockBackend<S> {
    descriptor: BackendDescriptor,
    tables: ScoreTables,
    dense: BTreeMap<String, Vec<S>>,
    fill: f64,
    seen: u64,
}

#[derive(Serialize, Deserialize)]
struct MockState {
    seen: u64,
    fill: f64,
    tables: ScoreTables,
}

impl<S: Scalar> MockBackend<S> {
    pub fn new(tables: ScoreTables) -> Result<Self, BackendError> {
        let fill = tables
            .values()
            .flat_map(|t| t.values().copied())
            .fold(f64::INFINITY, f64::min);
        let fill = if fill.is_finite() { fill - 1.0 } else { 0.0 };
        Self::with_fill(tables, fill)
    }

    pub fn with_fill(tables: ScoreTables, fill: f64) -> Result<Self, BackendError> {
        let tokens: BTreeSet<&String> = tables.values().flat_map(|t| t.keys()).collect();
        let vocab = Arc::new(Vocabulary::new(tokens.into_iter().cloned().collect())?);
        if vocab.is_empty() {
            return Err(BackendError::Checkpoint {
                handle: "mock tables".into(),
                message: "no candidate tokens configured".into(),
            });
        }
        let to_scalar = |x: f64, token: &str| S::from_f64(x).filter(|s| s.is_finite()).ok_or_else(|| BackendError::NonFinite(token.to_owned()));
        let fill_s = to_scalar(fill, "<fill>")?;
        let mut dense = BTreeMap::new();
        for (probe, table) in &tables {
            let mut scores = vec![fill_s; vocab.len()];
            for (token, &score) in table {
                scores[vocab.id(token).expect("token from union")] = to_scalar(score, token)?;
            }
            dense.insert(probe.clone(), scores);
        }
        Ok(MockBackend {
            descriptor: BackendDescriptor {
                backend_id: MOCK_BACKEND_ID.into(),
                tokenizer_family: TokenizerFamily::Whitespace,
                candidate_vocabulary: vocab,
                max_sequence_length: 512,
                parameter_count: 0,
            },
            tables,
            dense,
            fill,
            seen: 0,
        })
    }

    /// Reads a JSON object mapping probe ids to `{token: score}` objects.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let bytes = fs::read(path)?;
        let tables: ScoreTables = serde_json::from_slice(&bytes).map_err(|e| BackendError::Checkpoint {
            handle: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::new(tables)
    }

    pub fn with_backend_id(mut self, id: impl Into<String>) -> Self {
        self.descriptor.backend_id = id.into();
        self
    }

    pub fn tables(&self) -> &ScoreTables {
        &self.tables
    }

    pub fn fill_score(&self) -> f64 {
        self.fill
    }
}

impl<S: Scalar> MaskedLm for MockBackend<S> {
    type Scalar = S;

    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>, BackendError> {
        Ok(text.split_whitespace().map(str::to_owned).collect())
    }

    fn mask_target(&self, words: &[String], index: usize) -> Result<Option<String>, BackendError> {
        let word = words.get(index).ok_or(BackendError::WordIndex {
            index,
            len: words.len(),
        })?;
        Ok(self.descriptor.candidate_vocabulary.id(word).map(|_| word.clone()))
    }

    fn predict_masked(&self, probe_id: &str, rendered: &str) -> Result<MaskScoreVector<S>, BackendError> {
        let (words, _) = split_rendered(rendered)?;
        if words.len() > self.descriptor.max_sequence_length {
            return Err(BackendError::TooLong {
                len: words.len(),
                max: self.descriptor.max_sequence_length,
            });
        }
        let scores = self
            .dense
            .get(probe_id)
            .ok_or_else(|| BackendError::UnknownProbe(probe_id.to_owned()))?;
        MaskScoreVector::new(probe_id, Arc::clone(&self.descriptor.candidate_vocabulary), scores.clone())
    }

    fn train_mlm_step(&mut self, batch: &[String], _masking: &MaskingConfig) -> Result<S, BackendError> {
        if batch.is_empty() {
            return Err(BackendError::EmptyBatch);
        }
        self.seen += batch.len() as u64;
        Ok(S::zero())
    }

    fn seen_examples(&self) -> u64 {
        self.seen
    }

    fn save_checkpoint(&self, dir: &Path, tag: &str) -> Result<CheckpointHandle, BackendError> {
        let path = dir.join(tag);
        fs::create_dir_all(&path)?;
        let state = MockState {
            seen: self.seen,
            fill: self.fill,
            tables: self.tables.clone(),
        };
        fs::write(path.join("mock.json"), serde_json::to_vec(&state).map_err(std::io::Error::from)?)?;
        Ok(CheckpointHandle { tag: tag.into(), path })
    }

    fn load_checkpoint(&mut self, handle: &CheckpointHandle) -> Result<(), BackendError> {
        let corrupt = |message: String| BackendError::Checkpoint {
            handle: handle.to_string(),
            message,
        };
        let bytes = fs::read(handle.path.join("mock.json")).map_err(|e| corrupt(e.to_string()))?;
        let state: MockState = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
        let id = self.descriptor.backend_id.clone();
        *self = Self::with_fill(state.tables, state.fill)?.with_backend_id(id);
        self.seen = state.seen;
        Ok(())
    }

    fn read_safe(&self) -> bool {
        true
    }
}
