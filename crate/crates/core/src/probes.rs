//! Cloze probe generation from held-out narratives and per-tokenizer
//! single-token filtering.

use std::collections::HashSet;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, MaskedLm, CLS, MASK, SEP};
use crate::corpus::ComplaintRecord;
use crate::dictionary::TermDictionary;
use crate::io::{self, ArtifactError, ArtifactHeader};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("no probes generated from {records} held-out records with a {terms}-term dictionary; check that the dictionary matches the corpus")]
    NoProbes { records: usize, terms: usize },
    #[error("no probe survived single-token filtering for '{backend_id}' ({total} candidates); tokenizer mismatch?")]
    NothingRetained { backend_id: String, total: usize },
    #[error("probe '{probe_id}' is inconsistent: {message}")]
    Inconsistent { probe_id: String, message: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// Splits a normalized narrative into sentences of whitespace-separated words.
///
/// A run of `.`, `!` or `?` followed by whitespace or the end of the text ends
/// a sentence and is removed. Empty sentences are dropped.
pub fn segment_sentences(narrative: &str) -> Vec<Vec<String>> {
    let is_end = |c: char| matches!(c, '.' | '!' | '?');
    let chars: Vec<(usize, char)> = narrative.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if is_end(chars[i].1) {
            let mut j = i;
            while j < chars.len() && is_end(chars[j].1) {
                j += 1;
            }
            if j == chars.len() || chars[j].1.is_whitespace() {
                let end = chars[i].0;
                sentences.push(&narrative[start..end]);
                start = chars.get(j).map_or(narrative.len(), |c| c.0);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    if start < narrative.len() {
        sentences.push(&narrative[start..]);
    }
    sentences
        .into_iter()
        .map(|s| s.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .filter(|words| !words.is_empty())
        .collect()
}

/// `[CLS] w0 … [MASK] … wn [SEP]` with `words[index]` masked.
pub fn render(words: &[String], index: usize) -> String {
    let mut out = String::from(CLS);
    for (i, w) in words.iter().enumerate() {
        out.push(' ');
        out.push_str(if i == index { MASK } else { w });
    }
    out.push(' ');
    out.push_str(SEP);
    out
}

/// Inverse of [`render`]: the sentence words with the mask filled by `truth`.
pub fn unmask(rendered: &str, truth: &str) -> Vec<String> {
    rendered
        .split_whitespace()
        .filter(|w| *w != CLS && *w != SEP)
        .map(|w| if w == MASK { truth } else { w }.to_owned())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Probe {
    pub probe_id: String,
    pub source_record_id: String,
    pub sentence: Vec<String>,
    pub mask_word_index: usize,
    pub ground_truth: String,
    pub rendered: String,
}

/// Persisted form of a probe; the sentence is recovered from `rendered`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeLine {
    pub probe_id: String,
    pub source_record_id: String,
    pub rendered: String,
    pub ground_truth: String,
    pub mask_word_index: usize,
}

impl Probe {
    pub fn new(probe_id: String, source_record_id: String, sentence: Vec<String>, index: usize) -> Self {
        let ground_truth = sentence[index].clone();
        let rendered = render(&sentence, index);
        Probe {
            probe_id,
            source_record_id,
            sentence,
            mask_word_index: index,
            ground_truth,
            rendered,
        }
    }

    pub fn to_line(&self) -> ProbeLine {
        ProbeLine {
            probe_id: self.probe_id.clone(),
            source_record_id: self.source_record_id.clone(),
            rendered: self.rendered.clone(),
            ground_truth: self.ground_truth.clone(),
            mask_word_index: self.mask_word_index,
        }
    }

    pub fn from_line(line: ProbeLine) -> Result<Self, ProbeError> {
        let inconsistent = |message: String| ProbeError::Inconsistent {
            probe_id: line.probe_id.clone(),
            message,
        };
        crate::backend::split_rendered(&line.rendered).map_err(|e| inconsistent(e.to_string()))?;
        let sentence = unmask(&line.rendered, &line.ground_truth);
        if sentence.get(line.mask_word_index) != Some(&line.ground_truth)
            || render(&sentence, line.mask_word_index) != line.rendered
        {
            return Err(inconsistent(format!(
                "mask index {} does not match the rendered text",
                line.mask_word_index
            )));
        }
        Ok(Probe {
            probe_id: line.probe_id,
            source_record_id: line.source_record_id,
            sentence,
            mask_word_index: line.mask_word_index,
            ground_truth: line.ground_truth,
            rendered: line.rendered,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeOptions {
    /// Drop probes whose (rendered, ground truth) pair repeats an earlier one.
    pub deduplicate: bool,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { deduplicate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSet {
    pub probes: Vec<Probe>,
    pub generator_config_hash: String,
    pub source_split: String,
}

pub const PROBES_KIND: &str = "probes";

impl ProbeSet {
    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    /// Hash of the probe records alone, independent of the provenance header.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::new();
        for p in &self.probes {
            serde_json::to_writer(&mut bytes, &p.to_line()).expect("serializable probe");
            bytes.push(b'\n');
        }
        io::sha256_hex(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProbeError> {
        let header = ArtifactHeader {
            kind: format!("{PROBES_KIND}:{}", self.source_split),
            config_hash: self.generator_config_hash.clone(),
        };
        io::write_jsonl(path, &header, self.probes.iter().map(Probe::to_line))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ProbeError> {
        let (header, lines): (_, Vec<ProbeLine>) = io::read_jsonl(path)?;
        let probes = lines.into_iter().map(Probe::from_line).collect::<Result<Vec<_>, _>>()?;
        let mut ids = HashSet::new();
        if let Some(dup) = probes.iter().find(|p| !ids.insert(p.probe_id.as_str())) {
            return Err(ProbeError::Inconsistent {
                probe_id: dup.probe_id.clone(),
                message: "duplicate probe id".into(),
            });
        }
        let source_split = header
            .kind
            .split_once(':')
            .map_or("heldout", |(_, split)| split)
            .to_owned();
        Ok(ProbeSet {
            probes,
            generator_config_hash: header.config_hash,
            source_split,
        })
    }
}

fn record_probes(record: &ComplaintRecord, dictionary: &TermDictionary) -> Vec<Probe> {
    let mut out = Vec::new();
    for (s, sentence) in segment_sentences(&record.narrative).into_iter().enumerate() {
        for (w, word) in sentence.iter().enumerate() {
            if dictionary.contains(word) {
                out.push(Probe::new(
                    format!("{}:{s}:{w}", record.record_id),
                    record.record_id.clone(),
                    sentence.clone(),
                    w,
                ));
            }
        }
    }
    out
}

/// One probe per dictionary-term occurrence in every held-out sentence, in
/// (record, sentence, position) order.
pub fn generate_probes(
    heldout: &[ComplaintRecord],
    dictionary: &TermDictionary,
    options: &ProbeOptions,
    config_hash: &str,
) -> Result<ProbeSet, ProbeError> {
    let per_record: Vec<Vec<Probe>> = heldout
        .par_iter()
        .map(|r| record_probes(r, dictionary))
        .collect();
    let mut probes: Vec<Probe> = per_record.into_iter().flatten().collect();
    if options.deduplicate {
        let mut seen = HashSet::new();
        probes.retain(|p| seen.insert((p.rendered.clone(), p.ground_truth.clone())));
    }
    if probes.is_empty() {
        return Err(ProbeError::NoProbes {
            records: heldout.len(),
            terms: dictionary.len(),
        });
    }
    Ok(ProbeSet {
        probes,
        generator_config_hash: config_hash.to_owned(),
        source_split: "heldout".into(),
    })
}

/// Per-backend outcome of single-token filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retention {
    pub backend_id: String,
    pub total: usize,
    pub retained: usize,
    pub multi_token: usize,
    pub too_long: usize,
}

impl Retention {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.retained as f64 / self.total as f64
        }
    }
}

/// Keeps probes whose ground truth is exactly one token of `backend` in the
/// context of its sentence and whose tokenized probe fits the backend.
pub fn filter_single_token<B: MaskedLm + ?Sized>(
    probes: &ProbeSet,
    backend: &B,
) -> Result<(ProbeSet, Retention), ProbeError> {
    let descriptor = backend.descriptor();
    let mut retention = Retention {
        backend_id: descriptor.backend_id.clone(),
        total: probes.len(),
        retained: 0,
        multi_token: 0,
        too_long: 0,
    };
    let mut kept = Vec::new();
    for probe in &probes.probes {
        if backend.mask_target(&probe.sentence, probe.mask_word_index)?.is_none() {
            retention.multi_token += 1;
            continue;
        }
        // [CLS] and [SEP] are counted by tokenizing the rendered form
        let len = backend.tokenize(&probe.rendered)?.len();
        if len > descriptor.max_sequence_length {
            retention.too_long += 1;
            continue;
        }
        kept.push(probe.clone());
    }
    retention.retained = kept.len();
    if kept.is_empty() {
        return Err(ProbeError::NothingRetained {
            backend_id: retention.backend_id,
            total: retention.total,
        });
    }
    info!(
        "{}: kept {}/{} probes ({} multi-token, {} too long)",
        retention.backend_id, retention.retained, retention.total, retention.multi_token, retention.too_long
    );
    Ok((
        ProbeSet {
            probes: kept,
            generator_config_hash: probes.generator_config_hash.clone(),
            source_split: probes.source_split.clone(),
        },
        retention,
    ))
}
