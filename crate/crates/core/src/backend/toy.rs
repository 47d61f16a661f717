//! A small trainable masked language model.
//!
//! The prediction at a masked position is computed from four context features
//! (left neighbour, right neighbour, mean of the left window, mean of the right
//! window), passed through two `tanh` layers and projected onto the vocabulary:
//!
//! ```text
//! x  = [E[t(i-1)]; E[t(i+1)]; mean E[left window]; mean E[right window]]
//! h1 = tanh(W1 x + b1)
//! h2 = tanh(W2 h1 + b2)
//! logits = O h2 + c
//! ```
//!
//! Training minimises softmax cross-entropy over randomly masked positions with
//! Adam. Everything is deterministic given the seeds and the seen-example
//! counter, so checkpoints and resumed runs reproduce bit-identical scores.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::wordpiece::{WordPiece, UNK};
use super::{
    split_rendered, BackendDescriptor, BackendError, CheckpointHandle, MaskScoreVector, MaskedLm, MaskingConfig,
    TokenizerFamily, Vocabulary, CLS, MASK, SEP,
};
use crate::Scalar;

pub const TOY_BACKEND_ID: &str = "toy-mlm";
const FORMAT: &str = "toy-mlm/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Tokens on each side averaged into the window features.
    pub window: usize,
    pub max_vocab: usize,
    /// Words rarer than this are left to character pieces.
    pub min_count: usize,
    pub max_sequence_length: usize,
    pub learning_rate: f64,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            embed_dim: 32,
            hidden_dim: 64,
            window: 4,
            max_vocab: 2000,
            min_count: 2,
            max_sequence_length: 128,
            learning_rate: 0.01,
            init_std: 0.1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * v + bias`
    fn affine(&self, v: &[S], bias: &[S]) -> Vec<S> {
        (0..self.rows)
            .map(|r| dot(self.row(r), v) + bias[r])
            .collect()
    }

    /// `selfᵀ * v`
    fn transpose_mul(&self, v: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.cols];
        for (r, &vr) in v.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o = *o + w * vr;
            }
        }
        out
    }

    /// `self += a bᵀ`
    fn add_outer(&mut self, a: &[S], b: &[S]) {
        for (r, &ar) in a.iter().enumerate() {
            for (w, &bc) in self.row_mut(r).iter_mut().zip(b) {
                *w = *w + ar * bc;
            }
        }
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

#[derive(Debug, Clone, PartialEq)]
struct Params<S> {
    embed: Matrix<S>,
    w1: Matrix<S>,
    b1: Vec<S>,
    w2: Matrix<S>,
    b2: Vec<S>,
    out: Matrix<S>,
    out_bias: Vec<S>,
}

impl<S: Scalar> Params<S> {
    fn zeros(vocab: usize, c: &ToyConfig) -> Self {
        Params {
            embed: Matrix::zeros(vocab, c.embed_dim),
            w1: Matrix::zeros(c.hidden_dim, 4 * c.embed_dim),
            b1: vec![S::zero(); c.hidden_dim],
            w2: Matrix::zeros(c.embed_dim, c.hidden_dim),
            b2: vec![S::zero(); c.embed_dim],
            out: Matrix::zeros(vocab, c.embed_dim),
            out_bias: vec![S::zero(); vocab],
        }
    }

    fn random(vocab: usize, c: &ToyConfig) -> Self {
        let mut p = Self::zeros(vocab, c);
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let normal = Normal::new(0.0, c.init_std).expect("positive init std");
        for t in [&mut p.embed.data, &mut p.w1.data, &mut p.w2.data, &mut p.out.data] {
            for w in t.iter_mut() {
                *w = S::lit(normal.sample(&mut rng));
            }
        }
        p
    }

    fn tensors(&self) -> [&[S]; 7] {
        [
            &self.embed.data,
            &self.w1.data,
            &self.b1,
            &self.w2.data,
            &self.b2,
            &self.out.data,
            &self.out_bias,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Vec<S>; 7] {
        [
            &mut self.embed.data,
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2.data,
            &mut self.b2,
            &mut self.out.data,
            &mut self.out_bias,
        ]
    }

    fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Adam<S> {
    m: Params<S>,
    v: Params<S>,
    step: u64,
}

struct Activations<S> {
    x: Vec<S>,
    h1: Vec<S>,
    h2: Vec<S>,
    logits: Vec<S>,
}

/// One masked position to predict: input ids (with masks applied), the
/// position, and the original token id there.
#[derive(Debug, Clone)]
struct Target {
    ids: Arc<Vec<usize>>,
    position: usize,
    token: usize,
}

fn window_range(len: usize, pos: usize, window: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let left = pos.saturating_sub(window)..pos;
    let right = (pos + 1).min(len)..(pos + 1 + window).min(len);
    (left, right)
}

impl<S: Scalar> Params<S> {
    fn features(&self, ids: &[usize], pos: usize, window: usize) -> Vec<S> {
        let d = self.embed.cols;
        let mut x = vec![S::zero(); 4 * d];
        if pos > 0 {
            x[..d].copy_from_slice(self.embed.row(ids[pos - 1]));
        }
        if pos + 1 < ids.len() {
            x[d..2 * d].copy_from_slice(self.embed.row(ids[pos + 1]));
        }
        let (left, right) = window_range(ids.len(), pos, window);
        for (slot, range) in [(2, left), (3, right)] {
            if range.is_empty() {
                continue;
            }
            let n = S::from_usize(range.len()).expect("window size");
            for j in range {
                for (o, &e) in x[slot * d..(slot + 1) * d].iter_mut().zip(self.embed.row(ids[j])) {
                    *o = *o + e / n;
                }
            }
        }
        x
    }

    fn forward(&self, ids: &[usize], pos: usize, window: usize) -> Activations<S> {
        let x = self.features(ids, pos, window);
        let h1: Vec<S> = self.w1.affine(&x, &self.b1).into_iter().map(S::tanh).collect();
        let h2: Vec<S> = self.w2.affine(&h1, &self.b2).into_iter().map(S::tanh).collect();
        let logits = self.out.affine(&h2, &self.out_bias);
        Activations { x, h1, h2, logits }
    }

    /// Cross-entropy at one target; gradients scaled by `scale` are added to `grads`.
    fn backward(&self, target: &Target, window: usize, scale: S, grads: &mut Params<S>) -> S {
        let ids = target.ids.as_slice();
        let act = self.forward(ids, target.position, window);
        let max = act.logits.iter().copied().fold(S::neg_infinity(), S::max);
        let exp: Vec<S> = act.logits.iter().map(|&l| (l - max).exp()).collect();
        let sum = exp.iter().copied().fold(S::zero(), |a, b| a + b);
        let loss = sum.ln() + max - act.logits[target.token];

        let mut dlogits: Vec<S> = exp.iter().map(|&e| e / sum * scale).collect();
        dlogits[target.token] = dlogits[target.token] - scale;
        grads.out.add_outer(&dlogits, &act.h2);
        for (g, &dl) in grads.out_bias.iter_mut().zip(&dlogits) {
            *g = *g + dl;
        }
        let dh2 = self.out.transpose_mul(&dlogits);
        let dz2: Vec<S> = dh2.iter().zip(&act.h2).map(|(&g, &h)| g * (S::one() - h * h)).collect();
        grads.w2.add_outer(&dz2, &act.h1);
        for (g, &d) in grads.b2.iter_mut().zip(&dz2) {
            *g = *g + d;
        }
        let dh1 = self.w2.transpose_mul(&dz2);
        let dz1: Vec<S> = dh1.iter().zip(&act.h1).map(|(&g, &h)| g * (S::one() - h * h)).collect();
        grads.w1.add_outer(&dz1, &act.x);
        for (g, &d) in grads.b1.iter_mut().zip(&dz1) {
            *g = *g + d;
        }
        let dx = self.w1.transpose_mul(&dz1);

        let d = self.embed.cols;
        let pos = target.position;
        let mut add_to_row = |row: usize, grad: &[S], factor: S| {
            for (g, &v) in grads.embed.row_mut(row).iter_mut().zip(grad) {
                *g = *g + v * factor;
            }
        };
        if pos > 0 {
            add_to_row(ids[pos - 1], &dx[..d], S::one());
        }
        if pos + 1 < ids.len() {
            add_to_row(ids[pos + 1], &dx[d..2 * d], S::one());
        }
        let (left, right) = window_range(ids.len(), pos, window);
        for (slot, range) in [(2, left), (3, right)] {
            if range.is_empty() {
                continue;
            }
            let inv = S::one() / S::from_usize(range.len()).expect("window size");
            for j in range {
                add_to_row(ids[j], &dx[slot * d..(slot + 1) * d], inv);
            }
        }
        loss
    }

    /// Mean loss over `targets` and its gradient.
    fn loss_and_gradient(&self, targets: &[Target], window: usize) -> (S, Params<S>) {
        let mut grads = Params {
            embed: Matrix::zeros(self.embed.rows, self.embed.cols),
            w1: Matrix::zeros(self.w1.rows, self.w1.cols),
            b1: vec![S::zero(); self.b1.len()],
            w2: Matrix::zeros(self.w2.rows, self.w2.cols),
            b2: vec![S::zero(); self.b2.len()],
            out: Matrix::zeros(self.out.rows, self.out.cols),
            out_bias: vec![S::zero(); self.out_bias.len()],
        };
        if targets.is_empty() {
            return (S::zero(), grads);
        }
        let scale = S::one() / S::from_usize(targets.len()).expect("target count");
        let total = targets
            .iter()
            .fold(S::zero(), |acc, t| acc + self.backward(t, window, scale, &mut grads));
        (total * scale, grads)
    }
}

/// Two-layer masked LM over a WordPiece vocabulary.
#[derive(Debug, Clone)]
pub struct ToyMlm<S> {
    config: ToyConfig,
    tokenizer: WordPiece,
    descriptor: BackendDescriptor,
    params: Params<S>,
    adam: Adam<S>,
    seen: u64,
}

impl<S: Scalar> ToyMlm<S> {
    /// Builds the vocabulary from `corpus` and initialises weights from `config.seed`.
    pub fn from_corpus<T: AsRef<str>>(corpus: &[T], config: ToyConfig) -> Result<Self, BackendError> {
        let tokenizer = WordPiece::build(corpus, config.max_vocab, config.min_count)?;
        Ok(Self::with_tokenizer(tokenizer, config))
    }

    pub fn with_tokenizer(tokenizer: WordPiece, config: ToyConfig) -> Self {
        let vocab = tokenizer.vocabulary().len();
        let params = Params::random(vocab, &config);
        let adam = Adam {
            m: Params::zeros(vocab, &config),
            v: Params::zeros(vocab, &config),
            step: 0,
        };
        let descriptor = BackendDescriptor {
            backend_id: TOY_BACKEND_ID.into(),
            tokenizer_family: TokenizerFamily::WordPiece,
            candidate_vocabulary: Arc::clone(tokenizer.vocabulary()),
            max_sequence_length: config.max_sequence_length,
            parameter_count: params.len() as u64,
        };
        ToyMlm {
            config,
            tokenizer,
            descriptor,
            params,
            adam,
            seen: 0,
        }
    }

    /// Restores a model saved with [`MaskedLm::save_checkpoint`].
    pub fn from_checkpoint(handle: &CheckpointHandle) -> Result<Self, BackendError> {
        let (meta, tensors) = read_checkpoint(handle)?;
        let vocab = Arc::new(Vocabulary::new(meta.vocabulary.clone())?);
        let tokenizer = WordPiece::new(vocab)?;
        let mut model = Self::with_tokenizer(tokenizer, meta.config.clone());
        model.restore(handle, meta, tensors)?;
        Ok(model)
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &WordPiece {
        &self.tokenizer
    }

    fn id(&self, token: &str) -> usize {
        self.tokenizer.vocabulary().id(token).expect("special token in vocabulary")
    }

    fn encode(&self, text: &str) -> Vec<usize> {
        let max_inner = self.config.max_sequence_length.saturating_sub(2);
        let mut tokens = self.tokenizer.tokenize(text);
        tokens.truncate(max_inner);
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(self.id(CLS));
        ids.extend(self.tokenizer.ids(&tokens));
        ids.push(self.id(SEP));
        ids
    }

    fn masked_targets(&self, batch: &[String], masking: &MaskingConfig) -> Vec<Target> {
        let mut rng = ChaCha8Rng::seed_from_u64(masking.seed ^ self.seen.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mask = self.id(MASK);
        let mut targets = Vec::new();
        for text in batch {
            let ids = self.encode(text);
            if ids.len() <= 2 {
                continue;
            }
            let maskable = 1..ids.len() - 1;
            let mut chosen: Vec<usize> = maskable
                .clone()
                .filter(|_| rng.gen_bool(masking.mask_probability.clamp(0.0, 1.0)))
                .collect();
            if chosen.is_empty() {
                chosen.push(rng.gen_range(maskable));
            }
            let mut input = ids.clone();
            for &p in &chosen {
                input[p] = mask;
            }
            let input = Arc::new(input);
            targets.extend(chosen.into_iter().map(|p| Target {
                ids: Arc::clone(&input),
                position: p,
                token: ids[p],
            }));
        }
        targets
    }

    fn adam_update(&mut self, grads: &Params<S>) {
        let (b1, b2, eps) = (S::lit(0.9), S::lit(0.999), S::lit(1e-8));
        let lr = S::lit(self.config.learning_rate);
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let c1 = S::one() - b1.powi(t);
        let c2 = S::one() - b2.powi(t);
        let params = self.params.tensors_mut();
        let ms = self.adam.m.tensors_mut();
        let vs = self.adam.v.tensors_mut();
        for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grads.tensors()) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (S::one() - b1) * g[i];
                v[i] = b2 * v[i] + (S::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    /// Mean masked-token loss on `texts` without updating anything.
    pub fn masked_loss(&self, texts: &[String], masking: &MaskingConfig) -> S {
        let targets = self.masked_targets(texts, masking);
        self.params.loss_and_gradient(&targets, self.config.window).0
    }

    fn restore(&mut self, handle: &CheckpointHandle, meta: CheckpointMeta, tensors: Vec<Vec<f64>>) -> Result<(), BackendError> {
        let corrupt = |message: String| BackendError::Checkpoint {
            handle: handle.to_string(),
            message,
        };
        if meta.scalar != std::any::type_name::<S>() {
            return Err(corrupt(format!("saved with {} scores, loading as {}", meta.scalar, std::any::type_name::<S>())));
        }
        let vocab = Arc::new(Vocabulary::new(meta.vocabulary)?);
        let mut params = Params::zeros(vocab.len(), &meta.config);
        let mut m = Params::zeros(vocab.len(), &meta.config);
        let mut v = Params::zeros(vocab.len(), &meta.config);
        let slots: Vec<&mut Vec<S>> = params
            .tensors_mut()
            .into_iter()
            .chain(m.tensors_mut())
            .chain(v.tensors_mut())
            .collect();
        if slots.len() != tensors.len() {
            return Err(corrupt(format!("expected {} tensors, found {}", slots.len(), tensors.len())));
        }
        for (i, (slot, values)) in slots.into_iter().zip(tensors).enumerate() {
            if slot.len() != values.len() {
                return Err(corrupt(format!("tensor {i} has {} values, expected {}", values.len(), slot.len())));
            }
            for (s, x) in slot.iter_mut().zip(values) {
                *s = S::from_f64(x).ok_or_else(|| corrupt(format!("tensor {i} value {x} out of range")))?;
            }
        }
        self.tokenizer = WordPiece::new(Arc::clone(&vocab))?;
        self.descriptor.candidate_vocabulary = vocab;
        self.descriptor.max_sequence_length = meta.config.max_sequence_length;
        self.descriptor.parameter_count = params.len() as u64;
        self.config = meta.config;
        self.params = params;
        self.adam = Adam { m, v, step: meta.adam_step };
        self.seen = meta.seen;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    format: String,
    scalar: String,
    config: ToyConfig,
    seen: u64,
    adam_step: u64,
    vocabulary: Vec<String>,
}

const META_FILE: &str = "meta.json";
const TENSOR_FILE: &str = "tensors.bin";

fn read_checkpoint(handle: &CheckpointHandle) -> Result<(CheckpointMeta, Vec<Vec<f64>>), BackendError> {
    let corrupt = |message: String| BackendError::Checkpoint {
        handle: handle.to_string(),
        message,
    };
    let meta_bytes = fs::read(handle.path.join(META_FILE)).map_err(|e| corrupt(e.to_string()))?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_bytes).map_err(|e| corrupt(e.to_string()))?;
    if meta.format != FORMAT {
        return Err(corrupt(format!("unsupported format '{}'", meta.format)));
    }
    let mut bytes = Vec::new();
    fs::File::open(handle.path.join(TENSOR_FILE))
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| corrupt(e.to_string()))?;
    let mut tensors = Vec::new();
    let mut rest = bytes.as_slice();
    let mut take = |n: usize| -> Result<&[u8], BackendError> {
        if rest.len() < n {
            return Err(corrupt("truncated tensor file".into()));
        }
        let (head, tail) = rest.split_at(n);
        rest = tail;
        Ok(head)
    };
    while let Ok(len_bytes) = take(8) {
        let len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
        let raw = take(len.checked_mul(8).ok_or_else(|| corrupt("tensor length overflow".into()))?)?;
        tensors.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        );
    }
    Ok((meta, tensors))
}

impl<S: Scalar> MaskedLm for ToyMlm<S> {
    type Scalar = S;

    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn tokenize(&self, text: &str) -> Result<Vec<String>, BackendError> {
        Ok(self.tokenizer.tokenize(text))
    }

    fn mask_target(&self, words: &[String], index: usize) -> Result<Option<String>, BackendError> {
        let pieces = self.tokenizer.word_pieces(words, index)?;
        Ok(match pieces.as_slice() {
            [one] if one != UNK => Some(one.clone()),
            _ => None,
        })
    }

    fn predict_masked(&self, probe_id: &str, rendered: &str) -> Result<MaskScoreVector<S>, BackendError> {
        split_rendered(rendered)?;
        let ids = self.tokenizer.ids(&self.tokenizer.tokenize(rendered));
        if ids.len() > self.config.max_sequence_length {
            return Err(BackendError::TooLong {
                len: ids.len(),
                max: self.config.max_sequence_length,
            });
        }
        let mask = self.id(MASK);
        let pos = ids.iter().position(|&t| t == mask).expect("mask checked above");
        let logits = self.params.forward(&ids, pos, self.config.window).logits;
        MaskScoreVector::new(probe_id, Arc::clone(&self.descriptor.candidate_vocabulary), logits)
    }

    fn train_mlm_step(&mut self, batch: &[String], masking: &MaskingConfig) -> Result<S, BackendError> {
        if batch.is_empty() {
            return Err(BackendError::EmptyBatch);
        }
        let targets = self.masked_targets(batch, masking);
        let (loss, grads) = self.params.loss_and_gradient(&targets, self.config.window);
        if !targets.is_empty() {
            self.adam_update(&grads);
        }
        self.seen += batch.len() as u64;
        Ok(loss)
    }

    fn seen_examples(&self) -> u64 {
        self.seen
    }

    fn save_checkpoint(&self, dir: &Path, tag: &str) -> Result<CheckpointHandle, BackendError> {
        let path = dir.join(tag);
        fs::create_dir_all(&path)?;
        let meta = CheckpointMeta {
            format: FORMAT.into(),
            scalar: std::any::type_name::<S>().into(),
            config: self.config.clone(),
            seen: self.seen,
            adam_step: self.adam.step,
            vocabulary: self.tokenizer.vocabulary().tokens().to_vec(),
        };
        let meta_json = serde_json::to_vec_pretty(&meta).map_err(std::io::Error::from)?;
        fs::write(path.join(META_FILE), meta_json)?;
        let mut out = std::io::BufWriter::new(fs::File::create(path.join(TENSOR_FILE))?);
        let all = self
            .params
            .tensors()
            .into_iter()
            .chain(self.adam.m.tensors())
            .chain(self.adam.v.tensors());
        for tensor in all {
            out.write_all(&(tensor.len() as u64).to_le_bytes())?;
            for &x in tensor {
                out.write_all(&x.as_f64().to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(CheckpointHandle {
            tag: tag.into(),
            path,
        })
    }

    fn load_checkpoint(&mut self, handle: &CheckpointHandle) -> Result<(), BackendError> {
        let (meta, tensors) = read_checkpoint(handle)?;
        self.restore(handle, meta, tensors)
    }

    fn read_safe(&self) -> bool {
        true
    }
}
