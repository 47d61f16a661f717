//! Ground-truth ranking and Precision@k aggregation.
//!
//! Ties are optimistic: the rank of the ground truth is one plus the number of
//! other candidates with a strictly higher score.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, MaskScoreVector, MaskedLm};
use crate::io::{self, ArtifactError, ArtifactHeader};
use crate::probes::{Probe, ProbeSet};

pub const TIE_RULE: &str = "optimistic (equal scores do not outrank the ground truth)";
pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground truth '{0}' is not a candidate token")]
    TruthNotCandidate(String),
    #[error("precision needs at least one rank")]
    NoRanks,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("all {total} probes were excluded for '{backend_id}'")]
    AllExcluded { backend_id: String, total: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// Rank of the candidate at `truth` among `scores` under the optimistic rule.
///
/// Works for any partially ordered score type, including exact ones.
pub fn rank_in_scores<S: PartialOrd>(scores: &[S], truth: usize) -> usize {
    let t = &scores[truth];
    1 + scores
        .iter()
        .enumerate()
        .filter(|(i, s)| *i != truth && *s > t)
        .count()
}

pub fn rank_of_truth<S: PartialOrd>(scores: &MaskScoreVector<S>, truth: &str) -> Result<usize, EvalError> {
    let idx = scores
        .vocabulary()
        .id(truth)
        .ok_or_else(|| EvalError::TruthNotCandidate(truth.to_owned()))?;
    Ok(rank_in_scores(scores.scores(), idx))
}

/// The `k` best candidates, highest score first, ties in vocabulary order.
pub fn top_k_tokens<S: PartialOrd>(scores: &MaskScoreVector<S>, k: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    let s = scores.scores();
    let cmp = |a: &usize, b: &usize| {
        s[*b]
            .partial_cmp(&s[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    let k = k.min(order.len());
    if k == 0 {
        return Vec::new();
    }
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    order
        .into_iter()
        .map(|i| scores.vocabulary().token(i).to_owned())
        .collect()
}

/// Fraction of ranks at or above `k`.
pub fn precision_at_k(ranks: &[usize], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if ranks.is_empty() {
        return Err(EvalError::NoRanks);
    }
    Ok(hits_at_k(ranks, k) as f64 / ranks.len() as f64)
}

fn hits_at_k(ranks: &[usize], k: usize) -> usize {
    ranks.iter().filter(|&&r| r <= k).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankResult {
    pub probe_id: String,
    pub rank: usize,
    pub top_k_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionResult {
    /// k → fraction of probes with rank ≤ k.
    pub p_at: BTreeMap<usize, f64>,
    /// k → integer hit count the fraction was computed from.
    pub hits: BTreeMap<usize, usize>,
    pub n_probes: usize,
    pub backend_id: String,
    pub checkpoint_tag: String,
}

impl PrecisionResult {
    pub fn from_ranks(ranks: &[usize], ks: &[usize], backend_id: &str, checkpoint_tag: &str) -> Result<Self, EvalError> {
        if ranks.is_empty() {
            return Err(EvalError::NoRanks);
        }
        if ks.contains(&0) {
            return Err(EvalError::ZeroK);
        }
        let hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, hits_at_k(ranks, k))).collect();
        let n = ranks.len();
        Ok(PrecisionResult {
            p_at: hits.iter().map(|(&k, &h)| (k, h as f64 / n as f64)).collect(),
            hits,
            n_probes: n,
            backend_id: backend_id.to_owned(),
            checkpoint_tag: checkpoint_tag.to_owned(),
        })
    }

    pub fn ks(&self) -> Vec<usize> {
        self.p_at.keys().copied().collect()
    }
}

/// Percent with one decimal.
pub fn percent(p: f64) -> String {
    format!("{:.1}", p * 100.0)
}

/// `"P@k1 (P@k2/ P@k3)"` in percent, ks ascending.
pub fn format_cell(result: &PrecisionResult) -> String {
    let mut values = result.p_at.values().map(|&p| percent(p));
    let first = values.next().unwrap_or_default();
    let rest: Vec<String> = values.collect();
    if rest.is_empty() {
        first
    } else {
        format!("{first} ({})", rest.join("/ "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusions {
    /// Ground truth is not exactly one candidate token for this backend.
    pub not_single_token: usize,
    /// Ground-truth token missing from the candidate vocabulary.
    pub out_of_vocabulary: usize,
    pub too_long: usize,
}

impl Exclusions {
    pub fn total(&self) -> usize {
        self.not_single_token + self.out_of_vocabulary + self.too_long
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    /// Tokens kept per probe in the audit log.
    pub audit_top: usize,
    /// Probes per backend call.
    pub batch_size: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: DEFAULT_KS.to_vec(),
            audit_top: 10,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub result: PrecisionResult,
    pub ranks: Vec<RankResult>,
    pub excluded: Exclusions,
}

enum Outcome {
    Ranked(RankResult),
    NotSingle,
    Oov,
    TooLong,
}

fn score_probe<B: MaskedLm + ?Sized>(
    backend: &B,
    probe: &Probe,
    scores: Result<MaskScoreVector<B::Scalar>, BackendError>,
    audit_top: usize,
) -> Result<Outcome, EvalError> {
    let Some(truth) = backend.mask_target(&probe.sentence, probe.mask_word_index)? else {
        return Ok(Outcome::NotSingle);
    };
    let scores = match scores {
        Ok(s) => s,
        Err(BackendError::TooLong { .. }) => return Ok(Outcome::TooLong),
        Err(e) => return Err(e.into()),
    };
    match rank_of_truth(&scores, &truth) {
        Ok(rank) => Ok(Outcome::Ranked(RankResult {
            probe_id: probe.probe_id.clone(),
            rank,
            top_k_tokens: top_k_tokens(&scores, audit_top),
        })),
        Err(EvalError::TruthNotCandidate(_)) => Ok(Outcome::Oov),
        Err(e) => Err(e),
    }
}

fn score_chunk<B: MaskedLm + ?Sized>(backend: &B, chunk: &[Probe], audit_top: usize) -> Result<Vec<Outcome>, EvalError> {
    let queries: Vec<(&str, &str)> = chunk
        .iter()
        .map(|p| (p.probe_id.as_str(), p.rendered.as_str()))
        .collect();
    let scored = backend.predict_batch(&queries);
    chunk
        .iter()
        .zip(scored)
        .map(|(probe, scores)| score_probe(backend, probe, scores, audit_top))
        .collect()
}

/// Scores every probe, ranks the ground truth and aggregates Precision@k.
///
/// Probes whose truth is not a single candidate token, or that exceed the
/// backend's length limit, are counted in [`Exclusions`] and left out.
pub fn evaluate<B: MaskedLm + ?Sized>(
    backend: &B,
    probes: &ProbeSet,
    options: &EvalOptions,
    checkpoint_tag: &str,
) -> Result<Evaluation, EvalError> {
    let batch = options.batch_size.max(1);
    let chunks: Vec<&[Probe]> = probes.probes.chunks(batch).collect();
    let outcomes: Vec<Vec<Outcome>> = if backend.read_safe() {
        chunks
            .par_iter()
            .map(|c| score_chunk(backend, c, options.audit_top))
            .collect::<Result<_, _>>()?
    } else {
        chunks
            .iter()
            .map(|c| score_chunk(backend, c, options.audit_top))
            .collect::<Result<_, _>>()?
    };
    let mut excluded = Exclusions::default();
    let mut ranks = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Outcome::Ranked(r) => ranks.push(r),
            Outcome::NotSingle => excluded.not_single_token += 1,
            Outcome::Oov => excluded.out_of_vocabulary += 1,
            Outcome::TooLong => excluded.too_long += 1,
        }
    }
    let backend_id = &backend.descriptor().backend_id;
    if ranks.is_empty() {
        return Err(EvalError::AllExcluded {
            backend_id: backend_id.clone(),
            total: probes.len(),
        });
    }
    let plain: Vec<usize> = ranks.iter().map(|r| r.rank).collect();
    let result = PrecisionResult::from_ranks(&plain, &options.ks, backend_id, checkpoint_tag)?;
    Ok(Evaluation {
        result,
        ranks,
        excluded,
    })
}

pub const AUDIT_KIND: &str = "rank-audit";

pub fn save_audit(path: &Path, config_hash: &str, ranks: &[RankResult]) -> Result<(), EvalError> {
    let header = ArtifactHeader {
        kind: AUDIT_KIND.into(),
        config_hash: config_hash.to_owned(),
    };
    io::write_jsonl(path, &header, ranks)?;
    Ok(())
}
