use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use odiprobe::backend::bridge::{BridgeBackend, BridgeConfig};
use odiprobe::backend::mock::MOCK_BACKEND_ID;
use odiprobe::backend::toy::TOY_BACKEND_ID;
use odiprobe::backend::{
    BackendDescriptor, BackendError, CheckpointHandle, MaskScoreVector, MaskedLm, MaskingConfig,
};
use odiprobe::config::PipelineConfig;
use odiprobe::{MockBackend, ToyBackend};

pub const TINY_BRIDGE_ID: &str = "tiny-random-bert";

/// Any backend the CLI can construct, behind one concrete type.
pub enum AnyBackend {
    Mock(MockBackend),
    Toy(Box<ToyBackend>),
    Bridge(BridgeBackend),
}

macro_rules! dispatch {
    ($self:expr, $b:ident => $body:expr) => {
        match $self {
            AnyBackend::Mock($b) => $body,
            AnyBackend::Toy($b) => $body,
            AnyBackend::Bridge($b) => $body,
        }
    };
}

impl MaskedLm for AnyBackend {
    type Scalar = f32;

    fn descriptor(&self) -> &BackendDescriptor {
        dispatch!(self, b => b.descriptor())
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>, BackendError> {
        dispatch!(self, b => b.tokenize(text))
    }

    fn mask_target(&self, words: &[String], index: usize) -> Result<Option<String>, BackendError> {
        dispatch!(self, b => b.mask_target(words, index))
    }

    fn predict_masked(&self, probe_id: &str, rendered: &str) -> Result<MaskScoreVector<f32>, BackendError> {
        dispatch!(self, b => b.predict_masked(probe_id, rendered))
    }

    fn predict_batch(&self, probes: &[(&str, &str)]) -> Vec<Result<MaskScoreVector<f32>, BackendError>> {
        dispatch!(self, b => b.predict_batch(probes))
    }

    fn train_mlm_step(&mut self, batch: &[String], masking: &MaskingConfig) -> Result<f32, BackendError> {
        dispatch!(self, b => b.train_mlm_step(batch, masking))
    }

    fn seen_examples(&self) -> u64 {
        dispatch!(self, b => b.seen_examples())
    }

    fn save_checkpoint(&self, dir: &Path, tag: &str) -> Result<CheckpointHandle, BackendError> {
        dispatch!(self, b => b.save_checkpoint(dir, tag))
    }

    fn load_checkpoint(&mut self, handle: &CheckpointHandle) -> Result<(), BackendError> {
        dispatch!(self, b => b.load_checkpoint(handle))
    }

    fn read_safe(&self) -> bool {
        dispatch!(self, b => b.read_safe())
    }
}

/// Inputs a backend may need besides the config.
#[derive(Default)]
pub struct BackendInputs<'a> {
    pub mock_table: Option<PathBuf>,
    /// Train narratives; the toy tokenizer is built from them.
    pub train: &'a [String],
    /// Whole words added to the tiny bridge model's vocabulary.
    pub tiny_words: Vec<String>,
}

pub fn handle_for(dir: &Path) -> CheckpointHandle {
    let tag = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    CheckpointHandle {
        tag,
        path: dir.to_path_buf(),
    }
}

/// Builds a backend by id: `mock`, `toy-mlm`, `tiny-random-bert`, `bridge`
/// (model from `[bridge]`) or any other id, taken as a transformers model
/// name or directory.
pub fn open_backend(id: &str, config: &PipelineConfig, inputs: BackendInputs<'_>) -> Result<AnyBackend> {
    Ok(match id {
        MOCK_BACKEND_ID => {
            let Some(table) = inputs.mock_table else {
                bail!("backend 'mock' needs --mock-table <path>");
            };
            let mock = MockBackend::from_file(&table).with_context(|| format!("loading mock table {}", table.display()))?;
            AnyBackend::Mock(mock)
        }
        TOY_BACKEND_ID => {
            if inputs.train.is_empty() {
                bail!("backend 'toy-mlm' builds its vocabulary from the train split, which is empty");
            }
            AnyBackend::Toy(Box::new(ToyBackend::from_corpus(inputs.train, config.toy.clone())?))
        }
        _ => {
            let mut bridge = config.bridge.clone();
            if id == TINY_BRIDGE_ID {
                bridge.tiny_random = true;
                if bridge.tiny_words.is_empty() {
                    bridge.tiny_words = inputs.tiny_words;
                }
            } else if id != "bridge" {
                bridge = BridgeConfig {
                    model: id.to_owned(),
                    tiny_random: false,
                    ..bridge
                };
            }
            AnyBackend::Bridge(BridgeBackend::spawn(&bridge).with_context(|| format!("starting backend '{id}'"))?)
        }
    })
}

/// As [`open_backend`], then restores `checkpoint` when given.
pub fn open_at(
    id: &str,
    config: &PipelineConfig,
    inputs: BackendInputs<'_>,
    checkpoint: Option<&Path>,
) -> Result<AnyBackend> {
    if let (TOY_BACKEND_ID, Some(dir)) = (id, checkpoint) {
        // the checkpoint carries its own vocabulary
        let model = ToyBackend::from_checkpoint(&handle_for(dir))?;
        return Ok(AnyBackend::Toy(Box::new(model)));
    }
    let mut backend = open_backend(id, config, inputs)?;
    if let Some(dir) = checkpoint {
        backend.load_checkpoint(&handle_for(dir))?;
    }
    Ok(backend)
}
