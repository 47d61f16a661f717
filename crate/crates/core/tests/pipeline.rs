mod common;

use std::collections::BTreeMap;

use odiprobe::backend::mock::ScoreTables;
use odiprobe::backend::MaskedLm;
use odiprobe::corpus::{self, OdiSchema};
use odiprobe::dictionary::{build_dictionary, count_term_frequencies, DictionaryOptions};
use odiprobe::evaluator::{evaluate, EvalOptions};
use odiprobe::probes::{filter_single_token, generate_probes, ProbeOptions, ProbeSet};
use odiprobe::{synthetic, MockBackend, ToyBackend};

struct Stages {
    split: corpus::CorpusSplit,
    probes: ProbeSet,
}

fn run_stages(n: usize, seed: u64) -> Stages {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("FLAT_CMPL.txt");
    let records = synthetic::complaint_records(n, seed);
    std::fs::write(&path, synthetic::odi_flat_file(&records)).unwrap();

    let (parsed, report) = corpus::parse_odi_flatfile(&path, &OdiSchema::default()).unwrap();
    assert_eq!(report.records, n);
    assert_eq!(report.malformed_rows, 0);
    let ids: Vec<String> = parsed.iter().map(|r| r.record_id.clone()).collect();
    let normalized = corpus::normalize_records(parsed);
    let outcome = corpus::filter_consumer_complaints(normalized, &Default::default());
    let kept = outcome.kept.clone();
    let split = corpus::split_corpus(kept, 0.9, 13).unwrap();
    assert!(corpus::is_partition(&ids, &outcome, &split));

    let all: Vec<_> = split.train.iter().chain(&split.heldout).cloned().collect();
    let terms = build_dictionary(&all, &DictionaryOptions::default()).unwrap();
    let train: Vec<&str> = split.train.iter().map(|r| r.narrative.as_str()).collect();
    let dictionary = count_term_frequencies(&terms, &train);
    assert!(dictionary.contains("brakes") && dictionary.contains("antilock"));
    assert!(!dictionary.contains("and"));
    let probes = generate_probes(&split.heldout, &dictionary, &ProbeOptions::default(), "h").unwrap();
    Stages { split, probes }
}

#[test]
fn stages_are_deterministic() {
    let a = run_stages(400, 5);
    let b = run_stages(400, 5);
    assert_eq!(a.split, b.split);
    assert_eq!(a.probes.content_hash(), b.probes.content_hash());
    assert!(!a.probes.is_empty());
    for p in &a.probes.probes {
        assert!(p.rendered.starts_with("[CLS] ") && p.rendered.ends_with(" [SEP]"));
        assert_eq!(p.ground_truth, p.sentence[p.mask_word_index]);
    }
}

#[test]
fn toy_backend_filters_and_scores_generated_probes() {
    let stages = run_stages(600, 8);
    let train: Vec<String> = stages.split.train.iter().map(|r| r.narrative.clone()).collect();
    let toy = ToyBackend::from_corpus(&train, common::small_toy_config()).unwrap();
    let (kept, retention) = filter_single_token(&stages.probes, &toy).unwrap();
    assert_eq!(retention.total, stages.probes.len());
    assert_eq!(retention.retained + retention.multi_token + retention.too_long, retention.total);
    let eval = evaluate(&toy, &kept, &EvalOptions::default(), "ckpt-0").unwrap();
    assert_eq!(eval.result.n_probes + eval.excluded.total(), kept.len());
    let vocab = toy.descriptor().candidate_vocabulary.len();
    assert!(eval.ranks.iter().all(|r| r.rank >= 1 && r.rank <= vocab));
}

/// Places each probe's truth at a chosen rank in a mock table and checks that
/// evaluation recovers exactly those ranks.
#[test]
fn mock_backend_reproduces_constructed_ranks() {
    let stages = run_stages(300, 3);
    let probes = &stages.probes;
    let fillers = ["zz0", "zz1", "zz2", "zz3", "zz4", "zz5", "zz6", "zz7", "zz8", "zz9", "zz10", "zz11"];
    let mut tables = ScoreTables::new();
    let mut expected = BTreeMap::new();
    for (i, p) in probes.probes.iter().enumerate() {
        let rank = 1 + (i * 7) % 12;
        let mut table: BTreeMap<String, f64> = fillers
            .iter()
            .enumerate()
            .map(|(j, t)| (t.to_string(), 100.0 - j as f64))
            .collect();
        // strictly between the (rank-1)-th and rank-th filler
        table.insert(p.ground_truth.clone(), 100.0 - (rank as f64 - 1.0) + 0.5);
        tables.insert(p.probe_id.clone(), table);
        expected.insert(p.probe_id.clone(), rank);
    }
    let mock = MockBackend::new(tables).unwrap();
    let (kept, retention) = filter_single_token(probes, &mock).unwrap();
    assert_eq!(retention.retained, probes.len());
    let eval = evaluate(&mock, &kept, &EvalOptions::default(), "ckpt-0").unwrap();
    for r in &eval.ranks {
        assert_eq!(r.rank, expected[&r.probe_id], "{}", r.probe_id);
    }
    let n = expected.len() as f64;
    for k in [1, 5, 10] {
        let hits = expected.values().filter(|&&r| r <= k).count();
        assert_eq!(eval.result.p_at[&k], hits as f64 / n);
    }
}
