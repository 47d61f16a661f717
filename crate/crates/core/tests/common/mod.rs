#![allow(dead_code)]

use std::path::Path;

use odiprobe::backend::toy::ToyConfig;
use odiprobe::backend::{BackendDescriptor, BackendError, CheckpointHandle, MaskScoreVector, MaskedLm, MaskingConfig};
use odiprobe::corpus::ComplaintRecord;
use odiprobe::dictionary::TermDictionary;
use odiprobe::probes::{filter_single_token, generate_probes, ProbeOptions, ProbeSet};
use odiprobe::{synthetic, ToyBackend};

pub const NOUNS: [&str; 8] = [
    "engine", "brakes", "transmission", "airbag", "steering", "seat", "antilock", "battery",
];

pub fn records(narratives: &[String], first_id: usize) -> Vec<ComplaintRecord> {
    narratives
        .iter()
        .enumerate()
        .map(|(i, n)| ComplaintRecord {
            record_id: (first_id + i).to_string(),
            narrative: n.clone(),
            component_description: String::new(),
            source_channel: "EVOQ".into(),
            received_date: None,
        })
        .collect()
}

pub fn small_toy_config() -> ToyConfig {
    ToyConfig {
        embed_dim: 16,
        hidden_dim: 32,
        seed: 11,
        ..ToyConfig::default()
    }
}

/// Train narratives, a fresh toy backend over them and `n_probes` probes the
/// backend can score.
pub fn toy_setup(n_train: usize, n_probes: usize, config: ToyConfig) -> (Vec<String>, ToyBackend, ProbeSet) {
    let train = synthetic::complaint_narratives(n_train, 101);
    let backend = ToyBackend::from_corpus(&train, config).expect("toy backend");
    let heldout = records(&synthetic::complaint_narratives(200, 202), 1_000_000);
    let dictionary = TermDictionary::from_terms(NOUNS);
    let probes = generate_probes(&heldout, &dictionary, &ProbeOptions::default(), "fixture").expect("probes");
    let (mut probes, _) = filter_single_token(&probes, &backend).expect("retained probes");
    probes.probes.truncate(n_probes);
    assert_eq!(probes.len(), n_probes, "fixture yields enough probes");
    (train, backend, probes)
}

/// Delegates to `inner` but fails the first training step taken at or past
/// `fail_at` examples.
pub struct FailAfter<B> {
    pub inner: B,
    pub fail_at: u64,
}

impl<B: MaskedLm> MaskedLm for FailAfter<B> {
    type Scalar = B::Scalar;

    fn descriptor(&self) -> &BackendDescriptor {
        self.inner.descriptor()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>, BackendError> {
        self.inner.tokenize(text)
    }

    fn mask_target(&self, words: &[String], index: usize) -> Result<Option<String>, BackendError> {
        self.inner.mask_target(words, index)
    }

    fn predict_masked(&self, probe_id: &str, rendered: &str) -> Result<MaskScoreVector<B::Scalar>, BackendError> {
        self.inner.predict_masked(probe_id, rendered)
    }

    fn train_mlm_step(&mut self, batch: &[String], masking: &MaskingConfig) -> Result<B::Scalar, BackendError> {
        if self.inner.seen_examples() >= self.fail_at {
            return Err(BackendError::Bridge("injected failure".into()));
        }
        self.inner.train_mlm_step(batch, masking)
    }

    fn seen_examples(&self) -> u64 {
        self.inner.seen_examples()
    }

    fn save_checkpoint(&self, dir: &Path, tag: &str) -> Result<CheckpointHandle, BackendError> {
        self.inner.save_checkpoint(dir, tag)
    }

    fn load_checkpoint(&mut self, handle: &CheckpointHandle) -> Result<(), BackendError> {
        self.inner.load_checkpoint(handle)
    }

    fn read_safe(&self) -> bool {
        self.inner.read_safe()
    }
}
