//! Continual MLM pre-training with evaluations at fixed example counts.
//!
//! A run evaluates the untouched backend first, then trains on a single seeded
//! shuffle of the train split. The batch that would cross an evaluation point
//! is shortened so evaluations happen at exactly the planned example counts.
//! After each point the checkpoint, audit log and run manifest are persisted,
//! which makes an interrupted run resumable.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, CheckpointHandle, MaskedLm, MaskingConfig};
use crate::evaluator::{self, format_cell, percent, EvalError, EvalOptions, PrecisionResult, TIE_RULE};
use crate::io::{self, ArtifactError};
use crate::probes::ProbeSet;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("interval {interval} must be positive and divide total {total}")]
    BadPlan { total: u64, interval: u64 },
    #[error("train set has {have} examples but the plan needs {need}; enable cycling or shorten the plan")]
    TrainSetTooSmall { have: usize, need: u64 },
    #[error("train set is empty")]
    EmptyTrainSet,
    #[error("backend has already seen {0} examples; runs start from an untouched backend")]
    NotFresh(u64),
    #[error("backend counter is {actual} at evaluation point {expected}")]
    CounterMismatch { expected: u64, actual: u64 },
    #[error("run failed at {seen} examples ({completed} evaluation points persisted in {manifest}): {source}")]
    Interrupted {
        seen: u64,
        completed: usize,
        manifest: PathBuf,
        #[source]
        source: Box<TrainerError>,
    },
    #[error("run manifest '{path}' was written by config {found}, not {expected}")]
    ConfigMismatch { path: PathBuf, expected: String, found: String },
    #[error("runs were evaluated on different probe sets ({0}); pass force to merge anyway")]
    ProbeSetMismatch(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointPlan {
    pub interval_examples: u64,
    pub total_examples: u64,
    pub eval_points: Vec<u64>,
}

/// `{0, interval, 2·interval, …, total}`
pub fn make_schedule(total: u64, interval: u64) -> Result<CheckpointPlan, TrainerError> {
    if total == 0 || interval == 0 || !total.is_multiple_of(interval) {
        return Err(TrainerError::BadPlan { total, interval });
    }
    Ok(CheckpointPlan {
        interval_examples: interval,
        total_examples: total,
        eval_points: (0..=total / interval).map(|i| i * interval).collect(),
    })
}

pub fn checkpoint_tag(point: u64) -> String {
    format!("ckpt-{point}")
}

/// Column header for an evaluation point.
pub fn point_label(point: u64) -> String {
    match point {
        0 => "out-of-the-box".into(),
        p if p % 1000 == 0 => format!("{}k", p / 1000),
        p => p.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub batch_size: usize,
    pub masking: MaskingConfig,
    pub shuffle_seed: u64,
    pub cycle: bool,
    pub eval: EvalOptions,
    pub config_hash: String,
    /// Hash of the probe set before per-backend filtering.
    pub source_probe_hash: String,
    /// Fraction of source probes kept for this backend.
    pub probe_retention: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            batch_size: 32,
            masking: MaskingConfig::default(),
            shuffle_seed: 29,
            cycle: false,
            eval: EvalOptions::default(),
            config_hash: String::new(),
            source_probe_hash: String::new(),
            probe_retention: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "message")]
pub enum RunStatus {
    Running,
    Complete,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub seen: u64,
    pub loss: f64,
}

/// Everything needed to resume a run or rebuild its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub backend_id: String,
    pub plan: CheckpointPlan,
    pub options: RunOptions,
    pub probe_hash: String,
    pub status: RunStatus,
    pub checkpoints: BTreeMap<u64, CheckpointHandle>,
    pub cells: BTreeMap<u64, PrecisionResult>,
    pub losses: Vec<StepLoss>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self, TrainerError> {
        Ok(io::read_json(&run_dir.join(MANIFEST_FILE))?)
    }

    fn save(&self, run_dir: &Path) -> Result<(), TrainerError> {
        Ok(io::write_json(&run_dir.join(MANIFEST_FILE), self)?)
    }

    pub fn report(&self) -> EvaluationReport {
        let mut grid = BTreeMap::new();
        grid.insert(self.backend_id.clone(), self.cells.clone());
        EvaluationReport {
            eval_points: self.plan.eval_points.clone(),
            grid,
            run_config_hash: self.config_hash.clone(),
            probe_retention: [(self.backend_id.clone(), self.options.probe_retention)].into(),
            source_probe_hash: self.options.source_probe_hash.clone(),
            ks: self.options.eval.ks.clone(),
        }
    }
}

/// The Precision@k grid: backends × evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub eval_points: Vec<u64>,
    /// backend id → evaluation point → result
    pub grid: BTreeMap<String, BTreeMap<u64, PrecisionResult>>,
    pub run_config_hash: String,
    pub probe_retention: BTreeMap<String, f64>,
    pub source_probe_hash: String,
    pub ks: Vec<usize>,
}

impl EvaluationReport {
    pub fn cell(&self, backend_id: &str, point: u64) -> Option<&PrecisionResult> {
        self.grid.get(backend_id).and_then(|row| row.get(&point))
    }

    pub fn is_complete(&self) -> bool {
        self.grid
            .values()
            .all(|row| self.eval_points.iter().all(|p| row.contains_key(p)))
    }

    pub fn load(path: &Path) -> Result<Self, TrainerError> {
        Ok(io::read_json(path)?)
    }
}

struct Trainer<'a, B: MaskedLm + ?Sized> {
    backend: &'a mut B,
    train: &'a [String],
    probes: &'a ProbeSet,
    run_dir: &'a Path,
    order: Vec<usize>,
    manifest: RunManifest,
}

impl<'a, B: MaskedLm + ?Sized> Trainer<'a, B> {
    fn evaluate_point(&mut self, point: u64) -> Result<(), TrainerError> {
        let seen = self.backend.seen_examples();
        if seen != point {
            return Err(TrainerError::CounterMismatch {
                expected: point,
                actual: seen,
            });
        }
        let tag = checkpoint_tag(point);
        let handle = self.backend.save_checkpoint(&self.run_dir.join("checkpoints"), &tag)?;
        let eval = evaluator::evaluate(&*self.backend, self.probes, &self.manifest.options.eval, &tag)?;
        evaluator::save_audit(
            &self.run_dir.join("audit").join(format!("{tag}.jsonl")),
            &self.manifest.config_hash,
            &eval.ranks,
        )
        .map_err(TrainerError::from)?;
        if eval.excluded.total() > 0 {
            warn!("{tag}: {} probes excluded ({:?})", eval.excluded.total(), eval.excluded);
        }
        info!(
            "{} at {}: {}",
            self.manifest.backend_id,
            point_label(point),
            format_cell(&eval.result)
        );
        self.manifest.checkpoints.insert(point, handle);
        self.manifest.cells.insert(point, eval.result);
        self.manifest.save(self.run_dir)
    }

    fn batch(&self, start: u64, len: usize) -> Vec<String> {
        let n = self.order.len() as u64;
        (0..len as u64)
            .map(|i| self.train[self.order[((start + i) % n) as usize]].clone())
            .collect()
    }

    /// Trains from the backend's current counter through the end of the plan.
    fn drive(&mut self) -> Result<(), TrainerError> {
        let points = self.manifest.plan.eval_points.clone();
        let batch_size = self.manifest.options.batch_size.max(1) as u64;
        let masking = self.manifest.options.masking;
        for &point in &points {
            if self.manifest.cells.contains_key(&point) {
                continue;
            }
            while self.backend.seen_examples() < point {
                let seen = self.backend.seen_examples();
                let len = batch_size.min(point - seen) as usize;
                let batch = self.batch(seen, len);
                let loss = self.backend.train_mlm_step(&batch, &masking)?;
                self.manifest.losses.push(StepLoss {
                    seen: self.backend.seen_examples(),
                    loss: loss.as_f64(),
                });
            }
            self.evaluate_point(point)?;
        }
        Ok(())
    }

    fn finish(mut self, outcome: Result<(), TrainerError>) -> Result<EvaluationReport, TrainerError> {
        match outcome {
            Ok(()) => {
                self.manifest.status = RunStatus::Complete;
                self.manifest.save(self.run_dir)?;
                let report = self.manifest.report();
                io::write_json(&self.run_dir.join(REPORT_FILE), &report)?;
                Ok(report)
            }
            Err(e) => {
                self.manifest.status = RunStatus::Failed(e.to_string());
                let path = self.run_dir.join(MANIFEST_FILE);
                self.manifest.save(self.run_dir)?;
                let report = self.manifest.report();
                io::write_json(&self.run_dir.join(REPORT_FILE), &report)?;
                Err(TrainerError::Interrupted {
                    seen: self.backend.seen_examples(),
                    completed: self.manifest.cells.len(),
                    manifest: path,
                    source: Box::new(e),
                })
            }
        }
    }
}

fn shuffled_order(len: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

fn check_train_set(train: &[String], plan: &CheckpointPlan, cycle: bool) -> Result<(), TrainerError> {
    if train.is_empty() {
        return Err(TrainerError::EmptyTrainSet);
    }
    if !cycle && (train.len() as u64) < plan.total_examples {
        return Err(TrainerError::TrainSetTooSmall {
            have: train.len(),
            need: plan.total_examples,
        });
    }
    Ok(())
}

/// Runs a full plan on an untouched backend, persisting into `run_dir`.
pub fn run<B: MaskedLm + ?Sized>(
    backend: &mut B,
    train: &[String],
    plan: &CheckpointPlan,
    probes: &ProbeSet,
    options: &RunOptions,
    run_dir: &Path,
) -> Result<EvaluationReport, TrainerError> {
    check_train_set(train, plan, options.cycle)?;
    if backend.seen_examples() != 0 {
        return Err(TrainerError::NotFresh(backend.seen_examples()));
    }
    let mut options = options.clone();
    if options.source_probe_hash.is_empty() {
        options.source_probe_hash = probes.content_hash();
    }
    let manifest = RunManifest {
        config_hash: options.config_hash.clone(),
        backend_id: backend.descriptor().backend_id.clone(),
        plan: plan.clone(),
        options,
        probe_hash: probes.content_hash(),
        status: RunStatus::Running,
        checkpoints: BTreeMap::new(),
        cells: BTreeMap::new(),
        losses: Vec::new(),
    };
    manifest.save(run_dir)?;
    let mut trainer = Trainer {
        order: shuffled_order(train.len(), manifest.options.shuffle_seed),
        backend,
        train,
        probes,
        run_dir,
        manifest,
    };
    let outcome = trainer.drive();
    trainer.finish(outcome)
}

/// Continues an interrupted run from its last persisted evaluation point.
///
/// `backend` must be constructed the same way as for the original run; its
/// state is replaced by the last checkpoint.
pub fn resume<B: MaskedLm + ?Sized>(
    backend: &mut B,
    train: &[String],
    probes: &ProbeSet,
    config_hash: &str,
    run_dir: &Path,
) -> Result<EvaluationReport, TrainerError> {
    let mut manifest = RunManifest::load(run_dir)?;
    if manifest.config_hash != config_hash {
        return Err(TrainerError::ConfigMismatch {
            path: run_dir.join(MANIFEST_FILE),
            expected: config_hash.to_owned(),
            found: manifest.config_hash,
        });
    }
    if manifest.probe_hash != probes.content_hash() {
        return Err(TrainerError::ProbeSetMismatch(format!(
            "manifest {} vs supplied {}",
            manifest.probe_hash,
            probes.content_hash()
        )));
    }
    check_train_set(train, &manifest.plan, manifest.options.cycle)?;
    if let Some((&point, handle)) = manifest.checkpoints.iter().next_back() {
        backend.load_checkpoint(handle)?;
        if backend.seen_examples() != point {
            return Err(TrainerError::CounterMismatch {
                expected: point,
                actual: backend.seen_examples(),
            });
        }
        manifest.losses.retain(|l| l.seen <= point);
    } else if backend.seen_examples() != 0 {
        return Err(TrainerError::NotFresh(backend.seen_examples()));
    }
    manifest.status = RunStatus::Running;
    let mut trainer = Trainer {
        order: shuffled_order(train.len(), manifest.options.shuffle_seed),
        backend,
        train,
        probes,
        run_dir,
        manifest,
    };
    let outcome = trainer.drive();
    trainer.finish(outcome)
}

/// Combines reports from several runs into one grid.
///
/// Reports must come from the same source probe set unless `force` is set.
pub fn merge_reports(reports: &[EvaluationReport], force: bool) -> Result<EvaluationReport, TrainerError> {
    let hashes: BTreeSet<&str> = reports.iter().map(|r| r.source_probe_hash.as_str()).collect();
    if hashes.len() > 1 && !force {
        return Err(TrainerError::ProbeSetMismatch(
            hashes.into_iter().collect::<Vec<_>>().join(", "),
        ));
    }
    let mut merged = EvaluationReport {
        eval_points: Vec::new(),
        grid: BTreeMap::new(),
        run_config_hash: String::new(),
        probe_retention: BTreeMap::new(),
        source_probe_hash: hashes.into_iter().next().unwrap_or_default().to_owned(),
        ks: Vec::new(),
    };
    let mut points = BTreeSet::new();
    let mut config_hashes = Vec::new();
    let mut ks = BTreeSet::new();
    for r in reports {
        points.extend(r.eval_points.iter().copied());
        ks.extend(r.ks.iter().copied());
        config_hashes.push(r.run_config_hash.clone());
        for (backend, row) in &r.grid {
            // later runs win per cell
            merged.grid.entry(backend.clone()).or_default().extend(row.clone());
        }
        merged.probe_retention.extend(r.probe_retention.clone());
    }
    config_hashes.dedup();
    merged.eval_points = points.into_iter().collect();
    merged.ks = ks.into_iter().collect();
    merged.run_config_hash = config_hashes.join("+");
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimCheck {
    pub claim: String,
    /// `None` when the grid lacks the cells needed to decide.
    pub holds: Option<bool>,
}

/// Directional checks for a full-scale grid: every backend's P@k does not
/// drop from the first to the second evaluation point, and each larger
/// backend beats `base` at point 0 on the first k.
pub fn directional_claims(report: &EvaluationReport, base: &str, larger: &[&str]) -> Vec<ClaimCheck> {
    let mut checks = Vec::new();
    if let [first, second, ..] = report.eval_points[..] {
        for backend in report.grid.keys() {
            let holds = match (report.cell(backend, first), report.cell(backend, second)) {
                (Some(a), Some(b)) => Some(report.ks.iter().all(|k| match (a.p_at.get(k), b.p_at.get(k)) {
                    (Some(x), Some(y)) => y >= x,
                    _ => false,
                })),
                _ => None,
            };
            checks.push(ClaimCheck {
                claim: format!("{backend}: P@k non-decreasing {} → {}", point_label(first), point_label(second)),
                holds,
            });
        }
    }
    let k = report.ks.first().copied().unwrap_or(1);
    let p_at_start = |b: &str| {
        report
            .eval_points
            .first()
            .and_then(|&p| report.cell(b, p))
            .and_then(|r| r.p_at.get(&k).copied())
    };
    for big in larger {
        let holds = match (p_at_start(big), p_at_start(base)) {
            (Some(x), Some(y)) => Some(x > y),
            _ => None,
        };
        checks.push(ClaimCheck {
            claim: format!("{big} beats {base} out-of-the-box on P@{k}"),
            holds,
        });
    }
    checks
}

const MISSING: &str = "—";

fn best_p1(report: &EvaluationReport, point: u64) -> Option<f64> {
    let k = *report.ks.first()?;
    report
        .grid
        .values()
        .filter_map(|row| row.get(&point))
        .filter_map(|r| r.p_at.get(&k).copied())
        .fold(None, |best, p| Some(best.map_or(p, |b: f64| b.max(p))))
}

fn rendered_cell(report: &EvaluationReport, backend: &str, point: u64, mark_best: bool) -> String {
    let Some(result) = report.cell(backend, point) else {
        return MISSING.into();
    };
    let cell = format_cell(result);
    let k = report.ks.first().copied().unwrap_or(1);
    let is_best = best_p1(report, point) == result.p_at.get(&k).copied();
    if mark_best && is_best {
        match cell.split_once(' ') {
            Some((first, rest)) => format!("**{first}** {rest}"),
            None => format!("**{cell}**"),
        }
    } else {
        cell
    }
}

fn ks_label(ks: &[usize]) -> String {
    match ks {
        [] => String::new(),
        [one] => format!("P@{one}"),
        [first, rest @ ..] => format!(
            "P@{first} ({})",
            rest.iter().map(|k| format!("P@{k}")).collect::<Vec<_>>().join("/ ")
        ),
    }
}

/// Markdown table with backends as rows and evaluation points as columns.
/// The best first-k precision in each column is bold.
pub fn render_markdown(report: &EvaluationReport) -> String {
    let mut out = format!("| model | {} |\n", report.eval_points.iter().map(|&p| point_label(p)).collect::<Vec<_>>().join(" | "));
    out.push_str(&format!("|---|{}\n", "---|".repeat(report.eval_points.len())));
    for backend in report.grid.keys() {
        let cells: Vec<String> = report
            .eval_points
            .iter()
            .map(|&p| rendered_cell(report, backend, p, true))
            .collect();
        out.push_str(&format!("| {backend} | {} |\n", cells.join(" | ")));
    }
    out.push_str(&format!(
        "\nCells: {} in percent. Ties: {TIE_RULE}. Each model is ranked over its own full vocabulary, so columns compare models on per-model probe subsets.\n",
        ks_label(&report.ks)
    ));
    if !report.probe_retention.is_empty() {
        let retention: Vec<String> = report
            .probe_retention
            .iter()
            .map(|(b, r)| format!("{b} {}%", percent(*r)))
            .collect();
        out.push_str(&format!("Probe retention after single-token filtering: {}.\n", retention.join(", ")));
    }
    out
}

/// Long-format CSV: one row per (backend, evaluation point).
pub fn render_csv(report: &EvaluationReport) -> String {
    let mut header = vec!["model".to_string(), "eval_point".into(), "label".into(), "n_probes".into()];
    header.extend(report.ks.iter().map(|k| format!("p_at_{k}")));
    header.extend(["best_in_column".into(), "probe_retention".into()]);
    let mut rows = vec![header];
    for (backend, row) in &report.grid {
        for &point in &report.eval_points {
            let mut line = vec![backend.clone(), point.to_string(), point_label(point)];
            match row.get(&point) {
                Some(r) => {
                    line.push(r.n_probes.to_string());
                    line.extend(report.ks.iter().map(|k| r.p_at.get(k).map_or(String::new(), |p| format!("{p:.6}"))));
                    let k = report.ks.first().copied().unwrap_or(1);
                    line.push((best_p1(report, point) == r.p_at.get(&k).copied()).to_string());
                }
                None => {
                    line.push(String::new());
                    line.extend(report.ks.iter().map(|_| String::new()));
                    line.push("false".into());
                }
            }
            line.push(report.probe_retention.get(backend).map_or(String::new(), |r| format!("{r:.6}")));
            rows.push(line);
        }
    }
    io::csv_with_header(&report.run_config_hash, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(p1: f64, p5: f64, p10: f64) -> PrecisionResult {
        PrecisionResult {
            p_at: [(1, p1), (5, p5), (10, p10)].into(),
            hits: BTreeMap::new(),
            n_probes: 1000,
            backend_id: "b".into(),
            checkpoint_tag: "ckpt-0".into(),
        }
    }

    fn report(rows: &[(&str, &[(u64, PrecisionResult)])], points: &[u64]) -> EvaluationReport {
        EvaluationReport {
            eval_points: points.to_vec(),
            grid: rows
                .iter()
                .map(|(b, cells)| (b.to_string(), cells.iter().cloned().collect()))
                .collect(),
            run_config_hash: "h".into(),
            probe_retention: BTreeMap::new(),
            source_probe_hash: "p".into(),
            ks: vec![1, 5, 10],
        }
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(make_schedule(400_000, 100_000).unwrap().eval_points, vec![0, 100_000, 200_000, 300_000, 400_000]);
        assert_eq!(make_schedule(1000, 500).unwrap().eval_points, vec![0, 500, 1000]);
        assert!(matches!(make_schedule(1000, 300), Err(TrainerError::BadPlan { .. })));
        assert!(make_schedule(1000, 0).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(point_label(0), "out-of-the-box");
        assert_eq!(point_label(100_000), "100k");
        assert_eq!(point_label(500), "500");
    }

    #[test]
    fn single_cell_renders_like_the_table() {
        let r = report(&[("bert", &[(0, result(0.125, 0.258, 0.302))])], &[0]);
        let md = render_markdown(&r);
        assert!(md.contains("| bert | **12.5** (25.8/ 30.2) |"), "{md}");
    }

    #[test]
    fn empty_grid_renders_placeholders() {
        let r = report(&[("bert", &[])], &[0, 100_000]);
        assert!(render_markdown(&r).contains("| bert | — | — |"));
        assert!(!r.is_complete());
    }

    #[test]
    fn best_is_flagged_per_column() {
        let a: &[(u64, PrecisionResult)] = &[(0, result(0.5, 0.6, 0.7)), (500, result(0.6, 0.7, 0.8))];
        let b: &[(u64, PrecisionResult)] = &[(0, result(0.1, 0.2, 0.3)), (500, result(0.2, 0.3, 0.4))];
        let r = report(&[("a", a), ("b", b)], &[0, 500]);
        let md = render_markdown(&r);
        assert!(md.contains("| a | **50.0** (60.0/ 70.0) | **60.0** (70.0/ 80.0) |"), "{md}");
        assert!(md.contains("| b | 10.0 (20.0/ 30.0) | 20.0 (30.0/ 40.0) |"), "{md}");
        let csv = render_csv(&r);
        assert!(csv.contains("a,0,out-of-the-box,1000,0.500000,0.600000,0.700000,true,"));
        assert!(csv.contains("b,500,500,1000,0.200000,0.300000,0.400000,false,"));
    }

    #[test]
    fn merge_requires_matching_probe_sets() {
        let a = report(&[("a", &[(0, result(0.5, 0.6, 0.7))])], &[0]);
        let mut b = report(&[("b", &[(0, result(0.1, 0.2, 0.3))])], &[0, 500]);
        let merged = merge_reports(&[a.clone(), b.clone()], false).unwrap();
        assert_eq!(merged.grid.len(), 2);
        assert_eq!(merged.eval_points, vec![0, 500]);
        b.source_probe_hash = "other".into();
        assert!(matches!(merge_reports(&[a.clone(), b.clone()], false), Err(TrainerError::ProbeSetMismatch(_))));
        assert!(merge_reports(&[a, b], true).is_ok());
    }

    #[test]
    fn directional_checks() {
        let a: &[(u64, PrecisionResult)] = &[(0, result(0.5, 0.6, 0.7)), (500, result(0.6, 0.7, 0.8))];
        let b: &[(u64, PrecisionResult)] = &[(0, result(0.1, 0.2, 0.3)), (500, result(0.05, 0.3, 0.4))];
        let r = report(&[("a", a), ("b", b)], &[0, 500]);
        let checks = directional_claims(&r, "b", &["a", "c"]);
        let holds: Vec<Option<bool>> = checks.iter().map(|c| c.holds).collect();
        assert_eq!(holds, vec![Some(true), Some(false), Some(true), None]);
    }
}
