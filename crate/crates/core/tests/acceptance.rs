//! Acceptance suite. Prints one verdict line per criterion and exits non-zero
//! if any criterion fails.
//!
//! Criterion 9 needs a grid from a full-scale run. Point
//! `ODIPROBE_FULL_SCALE_REPORT` at its `report.json` (or a merged report) to
//! check it; otherwise only the shipped configuration is validated.

mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use odiprobe::backend::mock::ScoreTables;
use odiprobe::backend::MaskedLm;
use odiprobe::config::PipelineConfig;
use odiprobe::corpus::{self, length_descriptives};
use odiprobe::dictionary::TermDictionary;
use odiprobe::evaluator::{evaluate, format_cell, rank_of_truth, EvalOptions, PrecisionResult};
use odiprobe::probes::{filter_single_token, generate_probes, Probe, ProbeOptions, ProbeSet};
use odiprobe::trainer::{self, directional_claims, make_schedule, EvaluationReport, RunManifest, RunOptions};
use odiprobe::{synthetic, MockBackend64, ToyBackend, ToyBackend64};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Info(String),
}

type Outcome = Result<Verdict, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn table(entries: &[(&str, f64)]) -> BTreeMap<String, f64> {
    entries.iter().map(|(t, s)| (t.to_string(), *s)).collect()
}

fn probe_set(probes: Vec<Probe>) -> ProbeSet {
    ProbeSet {
        probes,
        generator_config_hash: "acceptance".into(),
        source_split: "heldout".into(),
    }
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(String::from).collect()
}

fn probe_rendering() -> Outcome {
    let heldout = common::records(&["gear shift cable failure in auto transmission".to_string()], 1);
    let dictionary = TermDictionary::from_terms(["gear", "shift"]);
    let probes = generate_probes(&heldout, &dictionary, &ProbeOptions::default(), "h").map_err(|e| e.to_string())?;
    let rendered: Vec<&str> = probes.probes.iter().map(|p| p.rendered.as_str()).collect();
    let expected = [
        "[CLS] [MASK] shift cable failure in auto transmission [SEP]",
        "[CLS] gear [MASK] cable failure in auto transmission [SEP]",
    ];
    check(rendered == expected, || format!("got {rendered:?}"))?;
    Ok(Verdict::Pass("2 probes, byte-identical".into()))
}

/// Rank by full descending sort; the truth takes the first position holding its score.
fn brute_force_rank(scores: &[f64], truth: usize) -> usize {
    let mut sorted: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    sorted.iter().position(|&(s, _)| s == scores[truth]).unwrap() + 1
}

fn rank_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut mismatches, mut tied_truths) = (0, 0);
    let n_tables = 1200;
    for t in 0..n_tables {
        let v = rng.gen_range(5..=200);
        let levels = if t % 10 == 0 { 1 } else { rng.gen_range(2..=v / 2 + 1) };
        let scores: Vec<f64> = (0..v).map(|_| rng.gen_range(0..levels) as f64 * 0.25 - 3.0).collect();
        let truth = rng.gen_range(0..v);
        let tokens: Vec<String> = (0..v).map(|i| format!("t{i:03}")).collect();
        let tables: ScoreTables = [(
            "p".to_string(),
            tokens.iter().cloned().zip(scores.iter().copied()).collect(),
        )]
        .into();
        let mock = MockBackend64::new(tables).map_err(|e| e.to_string())?;
        let vector = mock.predict_masked("p", "[CLS] a [MASK] b [SEP]").map_err(|e| e.to_string())?;
        let rank = rank_of_truth(&vector, &tokens[truth]).map_err(|e| e.to_string())?;
        if scores.iter().filter(|&&s| s == scores[truth]).count() > 1 {
            tied_truths += 1;
        }
        if rank != brute_force_rank(&scores, truth) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, || format!("{mismatches} mismatches"))?;
    check(tied_truths > n_tables / 4, || format!("only {tied_truths} tables tie the truth"))?;
    Ok(Verdict::Pass(format!("{n_tables} tables, {tied_truths} with tied truth, 0 mismatches")))
}

fn random_probe_set(rng: &mut ChaCha8Rng, set: usize) -> (ProbeSet, ScoreTables) {
    let vocab: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
    let n = rng.gen_range(1..=40);
    let mut probes = Vec::new();
    let mut tables = ScoreTables::new();
    for i in 0..n {
        let len = rng.gen_range(2..10);
        let sentence: Vec<String> = (0..len).map(|_| vocab.choose(rng).unwrap().clone()).collect();
        let index = rng.gen_range(0..len);
        let id = format!("{set}:{i}");
        let picks = rng.gen_range(1..30);
        let mut t: BTreeMap<String, f64> = vocab
            .choose_multiple(rng, picks)
            .map(|w| (w.clone(), rng.gen_range(0..8) as f64))
            .collect();
        t.entry(sentence[index].clone()).or_insert(rng.gen_range(0..8) as f64);
        tables.insert(id.clone(), t);
        probes.push(Probe::new(id, set.to_string(), sentence, index));
    }
    (probe_set(probes), tables)
}

fn precision_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = EvalOptions::default();
    let mut total_probes = 0;
    for set in 0..500 {
        let (probes, tables) = random_probe_set(&mut rng, set);
        total_probes += probes.len();
        let mock = MockBackend64::new(tables).map_err(|e| e.to_string())?;
        let result = evaluate(&mock, &probes, &opts, "ckpt-0").map_err(|e| e.to_string())?.result;
        let (p1, p5, p10) = (result.p_at[&1], result.p_at[&5], result.p_at[&10]);
        check(p1 <= p5 && p5 <= p10, || format!("set {set}: {p1} {p5} {p10}"))?;
        let mut shuffled = probes.clone();
        shuffled.probes.shuffle(&mut rng);
        let again = evaluate(&mock, &shuffled, &opts, "ckpt-0").map_err(|e| e.to_string())?.result;
        check(again == result, || format!("set {set}: shuffle changed {result:?} to {again:?}"))?;
    }
    Ok(Verdict::Pass(format!("500 sets, {total_probes} probes")))
}

fn worked_example() -> Outcome {
    let sentence = words("gear shift cable failure in auto transmission");
    let probe = Probe::new("ex".into(), "1".into(), sentence, 1);
    let tables: ScoreTables = [(
        "ex".to_string(),
        table(&[("wrench", 9.0), ("axle", 8.0), ("shifter", 7.0), ("shift", 6.0), ("switch", 5.0), ("gear", 1.0)]),
    )]
    .into();
    let mock = MockBackend64::new(tables).map_err(|e| e.to_string())?;
    let eval = evaluate(&mock, &probe_set(vec![probe]), &EvalOptions::default(), "ckpt-0").map_err(|e| e.to_string())?;
    let r = &eval.ranks[0];
    check(r.rank == 4, || format!("rank {}", r.rank))?;
    check(r.top_k_tokens[..5] == ["wrench", "axle", "shifter", "shift", "switch"], || {
        format!("top-5 {:?}", &r.top_k_tokens[..5])
    })?;
    let hits = &eval.result.hits;
    check(hits[&1] == 0 && hits[&5] == 1 && hits[&10] == 1, || format!("hits {hits:?}"))?;
    Ok(Verdict::Pass("rank 4; P@1 0, P@5 1, P@10 1".into()))
}

fn cell_format() -> Outcome {
    let result = PrecisionResult {
        p_at: [(1, 0.125), (5, 0.258), (10, 0.302)].into(),
        hits: BTreeMap::new(),
        n_probes: 1000,
        backend_id: "bert-base-uncased".into(),
        checkpoint_tag: "ckpt-0".into(),
    };
    let cell = format_cell(&result);
    check(cell == "12.5 (25.8/ 30.2)", || format!("got {cell:?}"))?;
    Ok(Verdict::Pass(cell))
}

struct ToyRun {
    report: EvaluationReport,
    standalone: PrecisionResult,
    epoch_losses: (f64, f64),
}

fn toy_run() -> Result<ToyRun, String> {
    let narratives = synthetic::complaint_narratives(1000, 61);
    let split = corpus::split_corpus(common::records(&narratives, 1), 0.9, 13).map_err(|e| e.to_string())?;
    let train: Vec<String> = split.train.iter().map(|r| r.narrative.clone()).collect();
    let mut backend = ToyBackend::from_corpus(&train, Default::default()).map_err(|e| e.to_string())?;
    let probes = generate_probes(&split.heldout, &TermDictionary::from_terms(common::NOUNS), &ProbeOptions::default(), "h")
        .map_err(|e| e.to_string())?;
    let (mut probes, _) = filter_single_token(&probes, &backend).map_err(|e| e.to_string())?;
    probes.probes.truncate(20);
    if probes.len() != 20 {
        return Err(format!("only {} probes", probes.len()));
    }
    let standalone = evaluate(&backend, &probes, &EvalOptions::default(), "ckpt-0")
        .map_err(|e| e.to_string())?
        .result;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let plan = make_schedule(1000, 500).map_err(|e| e.to_string())?;
    let options = RunOptions {
        cycle: true,
        config_hash: "toy".into(),
        ..RunOptions::default()
    };
    let report = trainer::run(&mut backend, &train, &plan, &probes, &options, dir.path()).map_err(|e| e.to_string())?;

    // a step belongs to the pass over the train split in which it starts
    let manifest = RunManifest::load(dir.path()).map_err(|e| e.to_string())?;
    let n = train.len() as u64;
    let mut sums = [(0.0, 0u64); 2];
    let mut start = 0;
    for step in &manifest.losses {
        let size = step.seen - start;
        let epoch = (start / n).min(1) as usize;
        sums[epoch].0 += step.loss * size as f64;
        sums[epoch].1 += size;
        start = step.seen;
    }
    Ok(ToyRun {
        report,
        standalone,
        epoch_losses: (sums[0].0 / sums[0].1 as f64, sums[1].0 / sums[1].1 as f64),
    })
}

fn toy_grid() -> Outcome {
    let a = toy_run()?;
    let b = toy_run()?;
    check(a.report.is_complete() && a.report.eval_points == [0, 500, 1000], || {
        format!("grid {:?}", a.report.grid)
    })?;
    check(a.report.cell("toy-mlm", 0) == Some(&a.standalone), || "point 0 differs from standalone evaluate".into())?;
    check(a.report == b.report, || "seeded runs differ".into())?;
    let (e1, e2) = a.epoch_losses;
    check(e2 < e1, || format!("epoch losses {e1:.4} then {e2:.4}"))?;
    let cells: Vec<String> = a.report.eval_points.iter().map(|&p| format_cell(a.report.cell("toy-mlm", p).unwrap())).collect();
    Ok(Verdict::Pass(format!(
        "grid [{}]; epoch loss {e1:.3} then {e2:.3}",
        cells.join(" | ")
    )))
}

fn split_and_stats() -> Outcome {
    let records = synthetic::complaint_records(10_000, 7);
    let ids: Vec<String> = records.iter().map(|r| r.record_id.clone()).collect();
    let split = corpus::split_corpus(records, 0.9, 13).map_err(|e| e.to_string())?;
    let n_train = split.train.len() as i64;
    check((n_train - 9000).abs() <= 1, || format!("train {n_train}"))?;
    let mut union: Vec<&String> = split.train.iter().chain(&split.heldout).map(|r| &r.record_id).collect();
    union.sort();
    union.dedup();
    check(union.len() == ids.len() && split.train.len() + split.heldout.len() == ids.len(), || {
        "split is not a partition".into()
    })?;

    let d = length_descriptives(&[1, 30, 41, 43, 71], "words").map_err(|e| e.to_string())?;
    // nearest rank over n = 5: ranks ceil(1.25) = 2, ceil(2.5) = 3, ceil(3.75) = 4
    let want = (37.2, 1, 30, 41, 43, 71);
    let got = (d.mean, d.minimum, d.q25, d.median, d.q75, d.maximum);
    check((got.0 - want.0).abs() < 1e-12 && (got.1, got.2, got.3, got.4, got.5) == (want.1, want.2, want.3, want.4, want.5), || {
        format!("{got:?}")
    })?;
    let c = length_descriptives(&[5, 5, 5], "words").map_err(|e| e.to_string())?;
    check(c.mean == 5.0 && [c.minimum, c.q25, c.median, c.q75, c.maximum] == [5; 5], || format!("{c:?}"))?;
    Ok(Verdict::Pass(format!("train {n_train} / heldout {}; fixtures match", split.heldout.len())))
}

fn checkpoint_round_trip() -> Outcome {
    let (train, _, probes) = common::toy_setup(400, 50, common::small_toy_config());
    let mut model = ToyBackend64::from_corpus(&train, common::small_toy_config()).map_err(|e| e.to_string())?;
    let masking = Default::default();
    let predict_all = |m: &ToyBackend64| -> Result<Vec<Vec<u64>>, String> {
        probes
            .probes
            .iter()
            .map(|p| {
                m.predict_masked(&p.probe_id, &p.rendered)
                    .map(|v| v.scores().iter().map(|s| s.to_bits()).collect())
                    .map_err(|e| e.to_string())
            })
            .collect()
    };
    for chunk in train[..64].chunks(16) {
        model.train_mlm_step(chunk, &masking).map_err(|e| e.to_string())?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let handle = model.save_checkpoint(dir.path(), "ckpt-64").map_err(|e| e.to_string())?;
    let saved = predict_all(&model)?;
    for chunk in train[64..128].chunks(16) {
        model.train_mlm_step(chunk, &masking).map_err(|e| e.to_string())?;
    }
    check(predict_all(&model)? != saved, || "further training left predictions unchanged".into())?;
    model.load_checkpoint(&handle).map_err(|e| e.to_string())?;
    check(predict_all(&model)? == saved, || "in-place load is not bit-identical".into())?;
    let fresh = ToyBackend64::from_checkpoint(&handle).map_err(|e| e.to_string())?;
    check(predict_all(&fresh)? == saved, || "fresh load is not bit-identical".into())?;
    check(fresh.seen_examples() == 64, || format!("seen {}", fresh.seen_examples()))?;
    Ok(Verdict::Pass("50 probes bit-identical after load".into()))
}

fn full_scale() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper_scale.toml");
    let config = PipelineConfig::load(&path).map_err(|e| e.to_string())?;
    config.validate().map_err(|e| e.to_string())?;
    let plan = make_schedule(config.plan.total_examples, config.plan.interval_examples).map_err(|e| e.to_string())?;
    check(plan.eval_points == [0, 100_000, 200_000, 300_000, 400_000], || format!("{:?}", plan.eval_points))?;
    check(config.backends.len() == 5, || format!("{:?}", config.backends))?;
    let Ok(report_path) = std::env::var("ODIPROBE_FULL_SCALE_REPORT") else {
        return Ok(Verdict::Info(
            "full-scale config valid; grid needs GPU continual pre-training on the full corpus with published weights, not run here".into(),
        ));
    };
    let report = EvaluationReport::load(&PathBuf::from(&report_path)).map_err(|e| e.to_string())?;
    let checks = directional_claims(&report, "bert-base-uncased", &["bert-large-uncased", "albert-xxlarge-v2"]);
    let failed: Vec<&str> = checks.iter().filter(|c| c.holds != Some(true)).map(|c| c.claim.as_str()).collect();
    if failed.is_empty() {
        Ok(Verdict::Pass(format!("{} directional checks hold", checks.len())))
    } else {
        Ok(Verdict::Fail(format!("not established: {}", failed.join("; "))))
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 probe rendering", probe_rendering),
        ("2 rank oracle equivalence", rank_oracle),
        ("3 P@k monotonicity and order invariance", precision_properties),
        ("4 worked example rank", worked_example),
        ("5 cell formatting", cell_format),
        ("6 toy continual-training grid", toy_grid),
        ("7 split and stats", split_and_stats),
        ("8 checkpoint round trip", checkpoint_round_trip),
        ("9 full-scale directional claims", full_scale),
    ];
    let mut failures = 0;
    for (name, criterion) in criteria {
        let start = Instant::now();
        let verdict = criterion().unwrap_or_else(Verdict::Fail);
        let ms = start.elapsed().as_millis();
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Info(d) => ("INFO", d),
            Verdict::Fail(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {name}: {detail} ({ms} ms)");
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
