//! Pretrained transformer checkpoints served by a Python `transformers` process.
//!
//! The child process speaks line-delimited JSON on stdin/stdout (see
//! `python/hf_mlm_bridge.py`, embedded in this crate). The pipeline only ever
//! talks to it through [`MaskedLm`], so no model machinery is linked here.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    split_rendered, BackendDescriptor, BackendError, CheckpointHandle, MaskScoreVector, MaskedLm, MaskingConfig,
    TokenizerFamily, Vocabulary, CLS, MASK, SEP,
};

const SCRIPT: &str = include_str!("../../python/hf_mlm_bridge.py");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BridgeConfig {
    pub python: String,
    /// Hub identifier or local directory.
    pub model: String,
    pub learning_rate: f64,
    pub seed: u64,
    /// Build a randomly initialised two-layer BERT instead of loading weights.
    pub tiny_random: bool,
    /// Extra whole-word entries for the tiny model's vocabulary.
    pub tiny_words: Vec<String>,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            python: "python3".into(),
            model: "bert-base-uncased".into(),
            learning_rate: 5e-5,
            seed: 0,
            tiny_random: false,
            tiny_words: Vec::new(),
        }
    }
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Channel {
    fn call(&mut self, request: &Value) -> Result<Value, BackendError> {
        let mut line = serde_json::to_string(request).map_err(|e| BackendError::Bridge(e.to_string()))?;
        line.push('\n');
        self.stdin.write_all(line.as_bytes())?;
        self.stdin.flush()?;
        read_response(&mut self.stdout)
    }
}

fn read_response(stdout: &mut BufReader<ChildStdout>) -> Result<Value, BackendError> {
    let mut line = String::new();
    if stdout.read_line(&mut line)? == 0 {
        return Err(BackendError::Bridge("process exited".into()));
    }
    let value: Value =
        serde_json::from_str(&line).map_err(|e| BackendError::Bridge(format!("bad response {line:?}: {e}")))?;
    if let Some(err) = value.get("error").and_then(Value::as_str) {
        return Err(BackendError::Bridge(err.to_owned()));
    }
    Ok(value)
}

impl Drop for Channel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Deserialize)]
struct Describe {
    backend_id: String,
    tokenizer_family: TokenizerFamily,
    vocabulary: Vec<String>,
    max_sequence_length: usize,
    parameter_count: u64,
    mask_token: String,
    seen: u64,
}

/// Replaces the portable `[MASK]` marker with the model's own mask token and
/// drops the `[CLS]`/`[SEP]` markers, which the model tokenizer adds itself.
pub fn to_model_text(rendered: &str, mask_token: &str) -> String {
    rendered
        .split_whitespace()
        .filter(|w| *w != CLS && *w != SEP)
        .map(|w| if w == MASK { mask_token } else { w })
        .collect::<Vec<_>>()
        .join(" ")
}

pub struct BridgeBackend {
    descriptor: BackendDescriptor,
    mask_token: String,
    channel: Mutex<Channel>,
    seen: u64,
}

impl std::fmt::Debug for BridgeBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeBackend")
            .field("backend_id", &self.descriptor.backend_id)
            .field("seen", &self.seen)
            .finish()
    }
}

impl BridgeBackend {
    /// Starts the Python process and waits for the model to load.
    pub fn spawn(config: &BridgeConfig) -> Result<Self, BackendError> {
        let mut cmd = Command::new(&config.python);
        cmd.arg("-c")
            .arg(SCRIPT)
            .arg("--model")
            .arg(&config.model)
            .arg("--learning-rate")
            .arg(config.learning_rate.to_string())
            .arg("--seed")
            .arg(config.seed.to_string())
            .env("HF_HUB_DISABLE_PROGRESS_BARS", "1")
            .env("TRANSFORMERS_VERBOSITY", "error")
            .env("TOKENIZERS_PARALLELISM", "false");
        if config.tiny_random {
            cmd.arg("--tiny-random").arg("--tiny-words").arg(config.tiny_words.join(","));
        }
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Bridge(format!("cannot start {}: {e}", config.python)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let ready = read_response(&mut stdout);
        let mut channel = Channel { child, stdin, stdout };
        ready?;
        let d: Describe = serde_json::from_value(channel.call(&json!({"op": "describe"}))?)
            .map_err(|e| BackendError::Bridge(e.to_string()))?;
        Ok(BridgeBackend {
            descriptor: BackendDescriptor {
                backend_id: d.backend_id,
                tokenizer_family: d.tokenizer_family,
                candidate_vocabulary: Arc::new(Vocabulary::new(d.vocabulary)?),
                max_sequence_length: d.max_sequence_length,
                parameter_count: d.parameter_count,
            },
            mask_token: d.mask_token,
            channel: Mutex::new(channel),
            seen: d.seen,
        })
    }

    /// Whether `python` can import `torch` and `transformers`.
    pub fn python_available(python: &str) -> bool {
        Command::new(python)
            .args(["-c", "import torch, transformers"])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map(|s| s.success())
            .unwrap_or(false)
    }

    pub fn mask_token(&self) -> &str {
        &self.mask_token
    }

    fn call(&self, request: Value) -> Result<Value, BackendError> {
        self.channel
            .lock()
            .map_err(|_| BackendError::Bridge("channel poisoned".into()))?
            .call(&request)
    }
}

fn field<T: for<'de> Deserialize<'de>>(value: &Value, name: &str) -> Result<T, BackendError> {
    serde_json::from_value(value.get(name).cloned().unwrap_or(Value::Null))
        .map_err(|e| BackendError::Bridge(format!("field '{name}': {e}")))
}

impl MaskedLm for BridgeBackend {
    type Scalar = f32;

    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>, BackendError> {
        field(&self.call(json!({"op": "tokenize", "text": text}))?, "tokens")
    }

    fn mask_target(&self, words: &[String], index: usize) -> Result<Option<String>, BackendError> {
        if index >= words.len() {
            return Err(BackendError::WordIndex {
                index,
                len: words.len(),
            });
        }
        field(&self.call(json!({"op": "mask_target", "words": words, "index": index}))?, "token")
    }

    fn predict_masked(&self, probe_id: &str, rendered: &str) -> Result<MaskScoreVector<f32>, BackendError> {
        split_rendered(rendered)?;
        let text = to_model_text(rendered, &self.mask_token);
        let response = self.call(json!({"op": "predict", "text": text}));
        let response = match response {
            Err(BackendError::Bridge(msg)) if msg.starts_with("too long") => {
                return Err(BackendError::TooLong {
                    len: self.tokenize(&text)?.len() + 2,
                    max: self.descriptor.max_sequence_length,
                })
            }
            other => other?,
        };
        let scores: Vec<f64> = field(&response, "scores")?;
        // logits are computed in f32; the f64 transport is exact
        let scores = scores.into_iter().map(|s| s as f32).collect();
        MaskScoreVector::new(probe_id, Arc::clone(&self.descriptor.candidate_vocabulary), scores)
    }

    fn train_mlm_step(&mut self, batch: &[String], masking: &MaskingConfig) -> Result<f32, BackendError> {
        if batch.is_empty() {
            return Err(BackendError::EmptyBatch);
        }
        let response = self.call(json!({
            "op": "train_step",
            "batch": batch,
            "mask_probability": masking.mask_probability,
            "seed": masking.seed,
        }))?;
        self.seen = field(&response, "seen")?;
        Ok(field::<f64>(&response, "loss")? as f32)
    }

    fn seen_examples(&self) -> u64 {
        self.seen
    }

    fn save_checkpoint(&self, dir: &Path, tag: &str) -> Result<CheckpointHandle, BackendError> {
        let path = dir.join(tag);
        self.call(json!({"op": "save", "path": path}))?;
        Ok(CheckpointHandle { tag: tag.into(), path })
    }

    fn load_checkpoint(&mut self, handle: &CheckpointHandle) -> Result<(), BackendError> {
        let response = self
            .call(json!({"op": "load", "path": handle.path}))
            .map_err(|e| BackendError::Checkpoint {
                handle: handle.to_string(),
                message: e.to_string(),
            })?;
        self.seen = field(&response, "seen")?;
        Ok(())
    }
}
