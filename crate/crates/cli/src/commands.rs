use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use odiprobe::backend::toy::TOY_BACKEND_ID;
use odiprobe::backend::MaskedLm;
use odiprobe::config::PipelineConfig;
use odiprobe::corpus::{
    self, ComplaintRecord, CorpusLine, DropReason, LengthDescriptives, ParseReport, SplitTag,
};
use odiprobe::dictionary::{build_dictionary, count_term_frequencies, TermDictionary};
use odiprobe::evaluator::{self, format_cell, PrecisionResult};
use odiprobe::io::{self, ArtifactHeader};
use odiprobe::probes::{filter_single_token, generate_probes, ProbeSet, Retention};
use odiprobe::synthetic;
use odiprobe::trainer::{self, make_schedule, EvaluationReport, RunOptions, REPORT_FILE};
use serde::{Deserialize, Serialize};

use crate::backends::{open_at, BackendInputs, TINY_BRIDGE_ID};
use crate::{BackendArgs, Cli, Command, DictCommand, EvalArgs, Format, ProbesCommand, ReportArgs, StatsArgs, TrainArgs};

pub const CORPUS_KIND: &str = "corpus";

/// Resolved config plus the artifact layout under the output root.
pub struct Ctx {
    pub config: PipelineConfig,
    pub root: PathBuf,
    pub data_hash: String,
    pub config_hash: String,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut config = match &cli.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.split.seed = seed;
            config.plan.shuffle_seed = seed;
            config.masking.seed = seed;
            config.toy.seed = seed;
            config.bridge.seed = seed;
        }
        if let Some(root) = &cli.out_root {
            config.output_root = root.clone();
        }
        config.validate()?;
        Ok(Ctx {
            root: config.output_root.clone(),
            data_hash: config.data_hash(),
            config_hash: config.config_hash(),
            config,
        })
    }

    fn corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }

    fn dictionary(&self) -> PathBuf {
        self.root.join("dictionary.csv")
    }

    fn probes(&self) -> PathBuf {
        self.root.join("probes.jsonl")
    }

    fn filtered_probes(&self, backend: &str) -> PathBuf {
        self.root.join("probes").join(format!("{}.jsonl", file_safe(backend)))
    }

    fn eval_dir(&self, backend: &str, tag: &str) -> PathBuf {
        self.root.join("eval").join(file_safe(backend)).join(tag)
    }

    fn results_store(&self) -> PathBuf {
        self.root.join("eval").join("results.json")
    }

    fn run_dir(&self, backend: &str) -> PathBuf {
        self.root.join("runs").join(file_safe(backend))
    }
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing {}; run `odiprobe {producer}` first", path.display());
    }
    Ok(())
}

fn check_hash(found: Option<&str>, expected: &str, path: &Path, producer: &str) -> Result<()> {
    match found {
        Some(h) if h == expected => Ok(()),
        Some(h) => bail!(
            "{} was produced under config hash {h}, but the current config hashes to {expected}; re-run `odiprobe {producer}`",
            path.display()
        ),
        None => bail!("{} carries no config hash; re-run `odiprobe {producer}`", path.display()),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Command::InitConfig = cli.command {
        print!("{}", PipelineConfig::default().to_toml());
        return Ok(());
    }
    if let Command::Synth(args) = &cli.command {
        let records = synthetic::complaint_records(args.records, cli.seed.unwrap_or(1));
        io::write_atomic(&args.out, synthetic::odi_flat_file(&records).as_bytes())?;
        info!("wrote {} synthetic complaints to {}", records.len(), args.out.display());
        return Ok(());
    }
    let ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::InitConfig | Command::Synth(_) => unreachable!("handled above"),
        Command::Ingest => ingest(&ctx),
        Command::Dict(DictCommand::Build) => dict_build(&ctx),
        Command::Dict(DictCommand::Top { n, format }) => dict_top(&ctx, n, format),
        Command::Probes(ProbesCommand::Generate { dict, heldout, out }) => probes_generate(&ctx, dict, heldout, out),
        Command::Probes(ProbesCommand::Filter {
            model,
            backend,
            probes,
            out,
        }) => probes_filter(&ctx, &model, &backend, probes, out),
        Command::Eval(args) => eval(&ctx, args),
        Command::Train(args) => train(&ctx, args),
        Command::Report(args) => report(args),
        Command::Stats(args) => stats(&ctx, args),
    }
}

#[derive(Serialize)]
struct IngestSummary {
    config_hash: String,
    parse: ParseReport,
    normalized: usize,
    dropped_channel: usize,
    dropped_duplicate: usize,
    train: usize,
    heldout: usize,
}

fn ingest(ctx: &Ctx) -> Result<()> {
    let config = &ctx.config;
    config.validate_input()?;
    let data_hash = ctx.data_hash.clone();
    let (records, parse) = corpus::parse_odi_flatfile(&config.input.odi_file, &config.input.schema)?;
    let normalized = corpus::normalize_records(records);
    let n_normalized = normalized.len();
    let outcome = corpus::filter_consumer_complaints(normalized, &config.filter);
    let count = |reason| outcome.dropped.iter().filter(|(_, r)| *r == reason).count();
    let (dropped_channel, dropped_duplicate) = (count(DropReason::Channel), count(DropReason::DuplicateNarrative));
    let split = corpus::split_corpus(outcome.kept, config.split.ratio, config.split.seed)?;

    let header = ArtifactHeader {
        kind: CORPUS_KIND.into(),
        config_hash: data_hash.clone(),
    };
    io::write_jsonl(&ctx.corpus(), &header, split.lines())?;
    io::write_json(&ctx.root.join("split_manifest.json"), &split.manifest(&data_hash))?;
    let summary = IngestSummary {
        config_hash: data_hash.clone(),
        parse,
        normalized: n_normalized,
        dropped_channel,
        dropped_duplicate,
        train: split.train.len(),
        heldout: split.heldout.len(),
    };
    io::write_json(&ctx.root.join("ingest_report.json"), &summary)?;

    let train: Vec<&str> = split.train.iter().map(|r| r.narrative.as_str()).collect();
    let raw = corpus::length_descriptives(&corpus::raw_word_lengths(&train), "raw data")?;
    write_stats(ctx, &data_hash, &[raw])?;
    info!(
        "{} rows read, {} kept ({} other channels, {} duplicates); train {} / heldout {}",
        summary.parse.rows_read,
        split.train.len() + split.heldout.len(),
        dropped_channel,
        dropped_duplicate,
        summary.train,
        summary.heldout
    );
    Ok(())
}

fn write_stats(ctx: &Ctx, hash: &str, rows: &[LengthDescriptives]) -> Result<()> {
    let markdown = corpus::stats_markdown(rows);
    io::write_atomic(&ctx.root.join("stats.md"), markdown.as_bytes())?;
    io::write_atomic(&ctx.root.join("stats.csv"), corpus::stats_csv(hash, rows).as_bytes())?;
    print!("{markdown}");
    Ok(())
}

/// Train and held-out records from a corpus file, checked against the current config.
fn load_corpus(ctx: &Ctx, path: &Path) -> Result<(Vec<ComplaintRecord>, Vec<ComplaintRecord>)> {
    require(path, "ingest")?;
    let (header, lines): (_, Vec<CorpusLine>) = io::read_jsonl(path)?;
    if header.kind != CORPUS_KIND {
        bail!("{} is a '{}' artifact, not a corpus", path.display(), header.kind);
    }
    check_hash(Some(&header.config_hash), &ctx.data_hash, path, "ingest")?;
    let (mut train, mut heldout) = (Vec::new(), Vec::new());
    for line in lines {
        match line.split_tag {
            SplitTag::Train => train.push(line.into_record()),
            SplitTag::Heldout => heldout.push(line.into_record()),
        }
    }
    Ok((train, heldout))
}

fn train_narratives(ctx: &Ctx) -> Result<Vec<String>> {
    let (train, _) = load_corpus(ctx, &ctx.corpus())?;
    Ok(train.into_iter().map(|r| r.narrative).collect())
}

fn load_dictionary(ctx: &Ctx, path: &Path) -> Result<TermDictionary> {
    require(path, "dict build")?;
    let (dictionary, hash) = TermDictionary::load_csv(path)?;
    check_hash(hash.as_deref(), &ctx.data_hash, path, "dict build")?;
    Ok(dictionary)
}

fn dict_build(ctx: &Ctx) -> Result<()> {
    let (train, heldout) = load_corpus(ctx, &ctx.corpus())?;
    let all: Vec<ComplaintRecord> = train.iter().chain(&heldout).cloned().collect();
    let terms = build_dictionary(&all, &ctx.config.dictionary)?;
    let narratives: Vec<&str> = train.iter().map(|r| r.narrative.as_str()).collect();
    let dictionary = count_term_frequencies(&terms, &narratives);
    dictionary.save_csv(&ctx.dictionary(), &ctx.data_hash)?;
    info!("{} terms written to {}", dictionary.len(), ctx.dictionary().display());
    print!("{}", dictionary.top_markdown(10));
    Ok(())
}

fn dict_top(ctx: &Ctx, n: usize, format: Format) -> Result<()> {
    let dictionary = load_dictionary(ctx, &ctx.dictionary())?;
    match format {
        Format::Md => print!("{}", dictionary.top_markdown(n)),
        Format::Csv => {
            let mut rows = vec![vec!["term".to_string(), "frequency".to_string()]];
            rows.extend(dictionary.top(n).into_iter().map(|(t, f)| vec![t.to_owned(), f.to_string()]));
            print!("{}", io::csv_with_header(&ctx.data_hash, &rows));
        }
    }
    Ok(())
}

fn probes_generate(ctx: &Ctx, dict: Option<PathBuf>, heldout: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let dictionary = load_dictionary(ctx, &dict.unwrap_or_else(|| ctx.dictionary()))?;
    let (_, heldout) = load_corpus(ctx, &heldout.unwrap_or_else(|| ctx.corpus()))?;
    let probes = generate_probes(&heldout, &dictionary, &ctx.config.probes, &ctx.data_hash)?;
    let out = out.unwrap_or_else(|| ctx.probes());
    probes.save(&out)?;
    info!("{} probes written to {}", probes.len(), out.display());
    println!("content_hash={}", probes.content_hash());
    Ok(())
}

fn load_probes(ctx: &Ctx, path: &Path) -> Result<ProbeSet> {
    require(path, "probes generate")?;
    let probes = ProbeSet::load(path)?;
    check_hash(Some(&probes.generator_config_hash), &ctx.data_hash, path, "probes generate")?;
    Ok(probes)
}

fn backend_inputs<'a>(ctx: &Ctx, id: &str, args: &BackendArgs, train: &'a [String]) -> Result<BackendInputs<'a>> {
    let tiny_words = if id == TINY_BRIDGE_ID && ctx.config.bridge.tiny_words.is_empty() {
        load_dictionary(ctx, &ctx.dictionary())?.terms().map(String::from).collect()
    } else {
        Vec::new()
    };
    Ok(BackendInputs {
        mock_table: args.mock_table.clone(),
        train,
        tiny_words,
    })
}

fn needs_train(id: &str, checkpoint: Option<&Path>) -> bool {
    id == TOY_BACKEND_ID && checkpoint.is_none()
}

fn probes_filter(ctx: &Ctx, model: &str, args: &BackendArgs, probes: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let probes = load_probes(ctx, &probes.unwrap_or_else(|| ctx.probes()))?;
    let train = if needs_train(model, None) { train_narratives(ctx)? } else { Vec::new() };
    let backend = open_at(model, &ctx.config, backend_inputs(ctx, model, args, &train)?, None)?;
    let (kept, retention) = filter_single_token(&probes, &backend)?;
    let out = out.unwrap_or_else(|| ctx.filtered_probes(model));
    kept.save(&out)?;
    io::write_json(&out.with_extension("retention.json"), &retention)?;
    info!(
        "{model}: kept {}/{} probes ({} multi-token, {} too long) in {}",
        retention.retained,
        retention.total,
        retention.multi_token,
        retention.too_long,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredResult {
    pub config_hash: String,
    pub source_probe_hash: String,
    pub retention: Retention,
    pub result: PrecisionResult,
}

/// Results keyed by `backend/checkpoint_tag`; later writes replace a key.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct ResultsStore {
    pub results: BTreeMap<String, StoredResult>,
}

fn eval(ctx: &Ctx, args: EvalArgs) -> Result<()> {
    let mut options = ctx.config.eval.clone();
    if let Some(ks) = args.ks {
        options.ks = ks;
    }
    if options.ks.is_empty() || options.ks.contains(&0) {
        bail!("--ks needs positive integers");
    }
    let probes = load_probes(ctx, &args.probes.unwrap_or_else(|| ctx.probes()))?;
    let checkpoint = args.checkpoint.as_deref();
    let train = if needs_train(&args.backend, checkpoint) { train_narratives(ctx)? } else { Vec::new() };
    let inputs = backend_inputs(ctx, &args.backend, &args.backend_args, &train)?;
    let backend = open_at(&args.backend, &ctx.config, inputs, checkpoint)?;
    let (filtered, retention) = filter_single_token(&probes, &backend)?;
    let tag = match checkpoint {
        Some(dir) => crate::backends::handle_for(dir).tag,
        None => trainer::checkpoint_tag(0),
    };
    let evaluation = evaluator::evaluate(&backend, &filtered, &options, &tag)?;
    let backend_id = backend.descriptor().backend_id.clone();
    let dir = ctx.eval_dir(&backend_id, &tag);
    evaluator::save_audit(&dir.join("audit.jsonl"), &ctx.config_hash, &evaluation.ranks)?;
    let stored = StoredResult {
        config_hash: ctx.config_hash.clone(),
        source_probe_hash: probes.content_hash(),
        retention,
        result: evaluation.result.clone(),
    };
    io::write_json(&dir.join("result.json"), &stored)?;

    let store_path = ctx.results_store();
    let mut store: ResultsStore = if store_path.exists() {
        io::read_json(&store_path)?
    } else {
        ResultsStore::default()
    };
    store.results.insert(format!("{backend_id}/{tag}"), stored);
    io::write_json(&store_path, &store)?;
    if evaluation.excluded.total() > 0 {
        warn!("{} probes excluded: {:?}", evaluation.excluded.total(), evaluation.excluded);
    }
    println!("{backend_id} {tag} n={} {}", evaluation.result.n_probes, format_cell(&evaluation.result));
    Ok(())
}

fn parse_plan(text: &str) -> Result<(u64, u64)> {
    let (total, interval) = text
        .split_once(':')
        .with_context(|| format!("--plan expects TOTAL:INTERVAL, got '{text}'"))?;
    Ok((total.trim().parse()?, interval.trim().parse()?))
}

fn train(ctx: &Ctx, args: TrainArgs) -> Result<()> {
    let mut config = ctx.config.clone();
    if let Some(plan) = &args.plan {
        (config.plan.total_examples, config.plan.interval_examples) = parse_plan(plan)?;
        config.validate()?;
    }
    let config_hash = config.config_hash();
    let plan = make_schedule(config.plan.total_examples, config.plan.interval_examples)?;
    let probes = load_probes(ctx, &args.probes.unwrap_or_else(|| ctx.probes()))?;
    let train = train_narratives(ctx)?;
    let inputs = backend_inputs(ctx, &args.backend, &args.backend_args, &train)?;
    let mut backend = open_at(&args.backend, &config, inputs, None)?;
    let (filtered, retention) = filter_single_token(&probes, &backend)?;
    let run_dir = args.out.unwrap_or_else(|| ctx.run_dir(&backend.descriptor().backend_id));
    fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;

    let report = if args.resume {
        require(&run_dir.join(trainer::MANIFEST_FILE), "train")?;
        trainer::resume(&mut backend, &train, &filtered, &config_hash, &run_dir)?
    } else {
        let snapshot = format!("# config_hash={config_hash}\n{}", config.to_toml());
        io::write_atomic(&run_dir.join("config.toml"), snapshot.as_bytes())?;
        let options = RunOptions {
            batch_size: config.plan.batch_size,
            masking: config.masking,
            shuffle_seed: config.plan.shuffle_seed,
            cycle: config.plan.cycle,
            eval: config.eval.clone(),
            config_hash: config_hash.clone(),
            source_probe_hash: probes.content_hash(),
            probe_retention: retention.ratio(),
        };
        trainer::run(&mut backend, &train, &plan, &filtered, &options, &run_dir)?
    };
    print!("{}", trainer::render_markdown(&report));
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let reports = args
        .runs
        .iter()
        .map(|p| {
            let path = if p.is_dir() { p.join(REPORT_FILE) } else { p.clone() };
            require(&path, "train")?;
            Ok(EvaluationReport::load(&path)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let merged = trainer::merge_reports(&reports, args.force)?;
    let text = match args.format {
        Format::Md => trainer::render_markdown(&merged),
        Format::Csv => trainer::render_csv(&merged),
    };
    match args.out {
        Some(path) => io::write_atomic(&path, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn stats(ctx: &Ctx, args: StatsArgs) -> Result<()> {
    let train = train_narratives(ctx)?;
    let mut rows = vec![corpus::length_descriptives(&corpus::raw_word_lengths(&train), "raw data")?];
    for id in args.backends.unwrap_or_else(|| ctx.config.backends.clone()) {
        let inputs = backend_inputs(ctx, &id, &args.backend_args, &train)?;
        let backend = open_at(&id, &ctx.config, inputs, None)?;
        let tokenized = train
            .iter()
            .map(|n| backend.tokenize(n))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(corpus::corpus_stats(&tokenized, &backend.descriptor().backend_id)?);
    }
    write_stats(ctx, &ctx.data_hash, &rows)
}
