//! Complaint corpus ingestion: flat-file parsing, channel filtering, normalization,
//! train/held-out splitting and length descriptives.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("complaint file '{path}' cannot be read: {source}")]
    MissingFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema field '{0}' is not present in the file header")]
    SchemaField(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot split an empty corpus")]
    EmptyCorpus,
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    BadRatio(f64),
    #[error("length descriptives need at least one sequence")]
    NoSequences,
}

/// One complaint as read from the flat file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplaintRecord {
    pub record_id: String,
    pub narrative: String,
    pub component_description: String,
    pub source_channel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received_date: Option<NaiveDate>,
}

/// Column reference in the flat file: 0-based position or header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldRef {
    Index(usize),
    Name(String),
}

/// Maps the logical complaint fields onto flat-file columns.
///
/// The defaults follow the published tab-separated ODI complaints file, which
/// has no header row: `CMPLID` (col 0), `COMPDESC` (11), `DATEA` (15),
/// `CDESCR` (19) and `CMPL_TYPE` (20).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdiSchema {
    pub delimiter: char,
    pub has_header: bool,
    /// Honour `"` quoting. The ODI file is unquoted and narratives contain bare quotes.
    pub quoting: bool,
    pub record_id: FieldRef,
    pub narrative: FieldRef,
    pub component_description: FieldRef,
    pub source_channel: FieldRef,
    pub received_date: Option<FieldRef>,
}

impl Default for OdiSchema {
    fn default() -> Self {
        OdiSchema {
            delimiter: '\t',
            has_header: false,
            quoting: false,
            record_id: FieldRef::Index(0),
            narrative: FieldRef::Index(19),
            component_description: FieldRef::Index(11),
            source_channel: FieldRef::Index(20),
            received_date: Some(FieldRef::Index(15)),
        }
    }
}

/// Counters describing what happened while parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub rows_read: usize,
    pub records: usize,
    /// Rows with too few columns or an empty id.
    pub malformed_rows: usize,
    pub empty_narratives: usize,
    pub duplicate_ids: usize,
    /// Invalid UTF-8 byte sequences replaced by U+FFFD.
    pub utf8_replacements: usize,
}

#[derive(Debug, Clone, Copy)]
struct Columns {
    id: usize,
    narrative: usize,
    component: usize,
    source: usize,
    date: Option<usize>,
}

fn resolve(field: &FieldRef, label: &str, header: Option<&csv::StringRecord>) -> Result<usize, CorpusError> {
    match field {
        FieldRef::Index(i) => Ok(*i),
        FieldRef::Name(name) => header
            .and_then(|h| h.iter().position(|c| c.trim() == name))
            .ok_or_else(|| CorpusError::SchemaField(format!("{label} ({name})"))),
    }
}

/// Decodes bytes as UTF-8, replacing invalid sequences and counting them.
pub fn decode_lossy(bytes: &[u8]) -> (String, usize) {
    let mut out = String::with_capacity(bytes.len());
    let mut replaced = 0;
    for chunk in bytes.utf8_chunks() {
        out.push_str(chunk.valid());
        if !chunk.invalid().is_empty() {
            out.push(char::REPLACEMENT_CHARACTER);
            replaced += 1;
        }
    }
    (out, replaced)
}

fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    NaiveDate::parse_from_str(raw, "%Y%m%d")
        .or_else(|_| NaiveDate::parse_from_str(raw, "%Y-%m-%d"))
        .ok()
}

/// Parses a delimiter-separated complaint file.
///
/// Rows with structural problems are counted in the report rather than failing
/// the whole parse. Rows with an empty narrative are excluded and counted.
pub fn parse_odi_flatfile(
    path: &Path,
    schema: &OdiSchema,
) -> Result<(Vec<ComplaintRecord>, ParseReport), CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    let (text, utf8_replacements) = decode_lossy(&bytes);
    let mut report = ParseReport {
        utf8_replacements,
        ..ParseReport::default()
    };
    let mut delim = [0u8; 4];
    let delim = schema.delimiter.encode_utf8(&mut delim).as_bytes()[0];
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(schema.has_header)
        .quoting(schema.quoting)
        .flexible(true)
        .from_reader(text.as_bytes());

    let header = if schema.has_header {
        Some(reader.headers()?.clone())
    } else {
        None
    };
    let cols = Columns {
        id: resolve(&schema.record_id, "record_id", header.as_ref())?,
        narrative: resolve(&schema.narrative, "narrative", header.as_ref())?,
        component: resolve(&schema.component_description, "component_description", header.as_ref())?,
        source: resolve(&schema.source_channel, "source_channel", header.as_ref())?,
        date: schema
            .received_date
            .as_ref()
            .map(|f| resolve(f, "received_date", header.as_ref()))
            .transpose()?,
    };
    let required = [cols.id, cols.narrative, cols.component, cols.source]
        .into_iter()
        .max()
        .unwrap_or(0);

    let mut seen_ids = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        report.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                warn!("skipping unreadable row {}: {e}", report.rows_read);
                report.malformed_rows += 1;
                continue;
            }
        };
        if row.len() <= required {
            report.malformed_rows += 1;
            continue;
        }
        let field = |i: usize| row.get(i).unwrap_or("").trim().to_owned();
        let record_id = field(cols.id);
        if record_id.is_empty() {
            report.malformed_rows += 1;
            continue;
        }
        let narrative = field(cols.narrative);
        if narrative.is_empty() {
            report.empty_narratives += 1;
            continue;
        }
        if !seen_ids.insert(record_id.clone()) {
            report.duplicate_ids += 1;
            continue;
        }
        records.push(ComplaintRecord {
            record_id,
            narrative,
            component_description: field(cols.component),
            source_channel: field(cols.source),
            received_date: cols.date.and_then(|i| row.get(i)).and_then(parse_date),
        });
    }
    report.records = records.len();
    if report.malformed_rows > 0 {
        warn!("{} malformed rows in {}", report.malformed_rows, path.display());
    }
    Ok((records, report))
}

/// Lower-cases and trims. Nothing else is touched.
pub fn normalize_text(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// Normalizes narratives and component descriptions in parallel and drops
/// records whose narrative becomes empty. Output order follows input order.
pub fn normalize_records(records: Vec<ComplaintRecord>) -> Vec<ComplaintRecord> {
    records
        .into_par_iter()
        .map(|mut r| {
            r.narrative = normalize_text(&r.narrative);
            r.component_description = normalize_text(&r.component_description);
            r
        })
        .filter(|r| !r.narrative.is_empty())
        .collect()
}

/// Which source channels count as direct consumer complaints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterRules {
    pub keep_channels: BTreeSet<String>,
    pub case_insensitive: bool,
}

impl Default for FilterRules {
    /// ODI `CMPL_TYPE` codes for vehicle owner questionnaires (web, phone,
    /// mail). A best guess at "filed by the owner"; override in config.
    fn default() -> Self {
        FilterRules {
            keep_channels: ["EVOQ", "IVOQ", "MVOQ", "RVOQ", "VOQ"]
                .into_iter()
                .map(String::from)
                .collect(),
            case_insensitive: true,
        }
    }
}

impl FilterRules {
    pub fn keeps(&self, channel: &str) -> bool {
        let channel = channel.trim();
        if self.case_insensitive {
            self.keep_channels
                .iter()
                .any(|c| c.eq_ignore_ascii_case(channel))
        } else {
            self.keep_channels.contains(channel)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Channel,
    DuplicateNarrative,
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<ComplaintRecord>,
    pub dropped: Vec<(String, DropReason)>,
}

/// Keeps records from the configured channels, then removes records whose
/// narrative exactly repeats an earlier kept one. Order is preserved.
pub fn filter_consumer_complaints(records: Vec<ComplaintRecord>, rules: &FilterRules) -> FilterOutcome {
    let mut outcome = FilterOutcome::default();
    let mut narratives = HashSet::new();
    for record in records {
        if !rules.keeps(&record.source_channel) {
            outcome.dropped.push((record.record_id, DropReason::Channel));
        } else if !narratives.insert(record.narrative.clone()) {
            outcome
                .dropped
                .push((record.record_id, DropReason::DuplicateNarrative));
        } else {
            outcome.kept.push(record);
        }
    }
    if outcome.kept.is_empty() {
        warn!(
            "channel filter kept no records (keep set: {:?})",
            rules.keep_channels
        );
    }
    outcome
}

/// Orders record ids numerically when both parse as integers, lexically otherwise.
pub fn compare_record_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<ComplaintRecord>,
    pub heldout: Vec<ComplaintRecord>,
    pub split_seed: u64,
    pub ratio: f64,
}

/// Number of training records for a corpus of `n`: `floor(ratio * n)`.
///
/// A 1e-9 slack absorbs binary representation error in `ratio` so that
/// e.g. `0.7 * 10` yields 7.
pub fn train_size(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Seeded split: canonical record-id order, ChaCha8 shuffle, prefix cut of
/// `floor(ratio * n)` records for training. Both halves are returned in
/// canonical record-id order.
pub fn split_corpus(
    mut records: Vec<ComplaintRecord>,
    ratio: f64,
    seed: u64,
) -> Result<CorpusSplit, CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::BadRatio(ratio));
    }
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    records.sort_by(|a, b| compare_record_ids(&a.record_id, &b.record_id));
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = train_size(ratio, records.len());
    let mut in_train = vec![false; records.len()];
    for &i in &order[..cut] {
        in_train[i] = true;
    }
    let (mut train, mut heldout) = (Vec::with_capacity(cut), Vec::new());
    for (record, train_flag) in records.into_iter().zip(in_train) {
        if train_flag {
            train.push(record);
        } else {
            heldout.push(record);
        }
    }
    Ok(CorpusSplit {
        train,
        heldout,
        split_seed: seed,
        ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Heldout,
}

/// One line of the normalized corpus artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusLine {
    pub record_id: String,
    pub narrative: String,
    pub component_description: String,
    pub split_tag: SplitTag,
}

impl CorpusLine {
    pub fn into_record(self) -> ComplaintRecord {
        ComplaintRecord {
            record_id: self.record_id,
            narrative: self.narrative,
            component_description: self.component_description,
            source_channel: String::new(),
            received_date: None,
        }
    }
}

impl CorpusSplit {
    pub fn lines(&self) -> impl Iterator<Item = CorpusLine> + '_ {
        let tag = |tag: SplitTag| {
            move |r: &ComplaintRecord| CorpusLine {
                record_id: r.record_id.clone(),
                narrative: r.narrative.clone(),
                component_description: r.component_description.clone(),
                split_tag: tag,
            }
        };
        self.train
            .iter()
            .map(tag(SplitTag::Train))
            .chain(self.heldout.iter().map(tag(SplitTag::Heldout)))
    }

    pub fn manifest(&self, config_hash: &str) -> SplitManifest {
        SplitManifest {
            config_hash: config_hash.to_owned(),
            split_seed: self.split_seed,
            ratio: self.ratio,
            train: self.train.iter().map(|r| r.record_id.clone()).collect(),
            heldout: self.heldout.iter().map(|r| r.record_id.clone()).collect(),
        }
    }
}

/// Record ids per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub config_hash: String,
    pub split_seed: u64,
    pub ratio: f64,
    pub train: Vec<String>,
    pub heldout: Vec<String>,
}

/// Length summary of a set of sequences.
///
/// Quantiles use the nearest-rank method: the `p` quantile of `n` sorted
/// lengths is the element at 1-based rank `ceil(p * n)` (at least 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthDescriptives {
    pub mean: f64,
    pub minimum: usize,
    pub q25: usize,
    pub median: usize,
    pub q75: usize,
    pub maximum: usize,
    pub unit_label: String,
}

fn nearest_rank(sorted: &[usize], p: f64) -> usize {
    let n = sorted.len();
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

pub fn length_descriptives(lengths: &[usize], unit_label: &str) -> Result<LengthDescriptives, CorpusError> {
    if lengths.is_empty() {
        return Err(CorpusError::NoSequences);
    }
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    let total: u128 = sorted.iter().map(|&l| l as u128).sum();
    Ok(LengthDescriptives {
        mean: total as f64 / sorted.len() as f64,
        minimum: sorted[0],
        q25: nearest_rank(&sorted, 0.25),
        median: nearest_rank(&sorted, 0.5),
        q75: nearest_rank(&sorted, 0.75),
        maximum: *sorted.last().expect("non-empty"),
        unit_label: unit_label.to_owned(),
    })
}

/// Descriptives over the lengths of token sequences.
pub fn corpus_stats<T, S>(texts: &[S], unit_label: &str) -> Result<LengthDescriptives, CorpusError>
where
    S: AsRef<[T]>,
{
    let lengths: Vec<usize> = texts.iter().map(|t| t.as_ref().len()).collect();
    length_descriptives(&lengths, unit_label)
}

/// Whitespace word counts, the unit of the raw-data row.
pub fn raw_word_lengths<S: AsRef<str>>(narratives: &[S]) -> Vec<usize> {
    narratives
        .iter()
        .map(|n| n.as_ref().split_whitespace().count())
        .collect()
}

const STATS_COLUMNS: [&str; 7] = ["", "avg. length", "min", "25%", "50%", "75%", "max"];

fn stats_row(d: &LengthDescriptives) -> Vec<String> {
    vec![
        d.unit_label.clone(),
        format!("{:.2}", d.mean),
        d.minimum.to_string(),
        d.q25.to_string(),
        d.median.to_string(),
        d.q75.to_string(),
        d.maximum.to_string(),
    ]
}

/// Markdown table with one row per descriptives entry.
pub fn stats_markdown(rows: &[LengthDescriptives]) -> String {
    let mut out = format!("| {} |\n", STATS_COLUMNS.join(" | "));
    out.push_str(&format!("|{}\n", "---|".repeat(STATS_COLUMNS.len())));
    for d in rows {
        out.push_str(&format!("| {} |\n", stats_row(d).join(" | ")));
    }
    out
}

/// CSV table (with config-hash comment) with one row per descriptives entry.
pub fn stats_csv(config_hash: &str, rows: &[LengthDescriptives]) -> String {
    let mut table = vec![STATS_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    table[0][0] = "sequences".into();
    table.extend(rows.iter().map(stats_row));
    crate::io::csv_with_header(config_hash, &table)
}

/// Partition check used by tests and the ingest command: every input id lands in
/// exactly one of dropped, train or held-out.
pub fn is_partition(input_ids: &[String], outcome: &FilterOutcome, split: &CorpusSplit) -> bool {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (id, _) in &outcome.dropped {
        *counts.entry(id).or_default() += 1;
    }
    for r in split.train.iter().chain(&split.heldout) {
        *counts.entry(&r.record_id).or_default() += 1;
    }
    counts.len() == input_ids.len()
        && input_ids
            .iter()
            .all(|id| counts.get(id.as_str()).copied() == Some(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn record(id: &str, narrative: &str, channel: &str) -> ComplaintRecord {
        ComplaintRecord {
            record_id: id.into(),
            narrative: narrative.into(),
            component_description: "ENGINE".into(),
            source_channel: channel.into(),
            received_date: None,
        }
    }

    fn write_file(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    fn small_schema() -> OdiSchema {
        OdiSchema {
            record_id: FieldRef::Index(0),
            component_description: FieldRef::Index(1),
            narrative: FieldRef::Index(2),
            source_channel: FieldRef::Index(3),
            received_date: Some(FieldRef::Index(4)),
            ..OdiSchema::default()
        }
    }

    #[test]
    fn parses_three_well_formed_rows() {
        let f = write_file(
            b"1\tENGINE\tENGINE STALLS\tEVOQ\t20190102\n\
              2\tSERVICE BRAKES, HYDRAULIC\tBRAKES FAILED\tEVOQ\t20190103\n\
              3\tSTEERING\t  WHEEL SHAKES  \tINS\t\n",
        );
        let (records, report) = parse_odi_flatfile(f.path(), &small_schema()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].narrative, "ENGINE STALLS");
        assert_eq!(records[1].component_description, "SERVICE BRAKES, HYDRAULIC");
        assert_eq!(records[2].narrative, "WHEEL SHAKES");
        assert_eq!(records[0].received_date, NaiveDate::from_ymd_opt(2019, 1, 2));
        assert_eq!(records[2].received_date, None);
        assert_eq!(report.malformed_rows, 0);
    }

    #[test]
    fn empty_narrative_is_counted_and_skipped() {
        let f = write_file(b"1\tENGINE\tSTALLS\tEVOQ\t\n2\tENGINE\t   \tEVOQ\t\n");
        let (records, report) = parse_odi_flatfile(f.path(), &small_schema()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(report.empty_narratives, 1);
    }

    #[test]
    fn short_rows_and_bad_bytes_are_counted() {
        let f = write_file(b"1\tENGINE\tST\xffALLS\tEVOQ\t\n2\tENGINE\n\tX\tY\tZ\t\n");
        let (records, report) = parse_odi_flatfile(f.path(), &small_schema()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].narrative, "ST\u{fffd}ALLS");
        assert_eq!(report.malformed_rows, 2);
        assert_eq!(report.utf8_replacements, 1);
    }

    #[test]
    fn named_columns_resolve_and_missing_name_is_fatal() {
        let f = write_file(b"id,desc,text,src\n7,AIR BAGS,BAG DEPLOYED,EVOQ\n");
        let mut schema = OdiSchema {
            delimiter: ',',
            has_header: true,
            record_id: FieldRef::Name("id".into()),
            component_description: FieldRef::Name("desc".into()),
            narrative: FieldRef::Name("text".into()),
            source_channel: FieldRef::Name("src".into()),
            received_date: None,
            ..OdiSchema::default()
        };
        let (records, _) = parse_odi_flatfile(f.path(), &schema).unwrap();
        assert_eq!(records[0].record_id, "7");
        schema.source_channel = FieldRef::Name("channel".into());
        match parse_odi_flatfile(f.path(), &schema) {
            Err(CorpusError::SchemaField(name)) => assert!(name.contains("channel")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_fatal() {
        let err = parse_odi_flatfile(Path::new("/nonexistent/odi.txt"), &OdiSchema::default());
        assert!(matches!(err, Err(CorpusError::MissingFile { .. })));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_text("GEAR SHIFT CABLE FAILURE"), "gear shift cable failure");
        assert_eq!(normalize_text("abc"), "abc");
        assert_eq!(normalize_text("  MiXeD Case  "), "mixed case");
        assert_eq!(normalize_text("A.B.S., (ABS)!"), "a.b.s., (abs)!");
    }

    #[test]
    fn filter_keeps_consumer_channel() {
        let records = vec![
            record("1", "a", "consumer"),
            record("2", "b", "insurer"),
            record("3", "c", "consumer"),
        ];
        let rules = FilterRules {
            keep_channels: ["consumer".to_string()].into(),
            case_insensitive: false,
        };
        let out = filter_consumer_complaints(records, &rules);
        assert_eq!(out.kept.len(), 2);
        assert_eq!(out.dropped, vec![("2".to_string(), DropReason::Channel)]);
    }

    #[test]
    fn filter_removes_duplicate_narratives() {
        let records = vec![record("1", "same text", "EVOQ"), record("2", "same text", "EVOQ")];
        let out = filter_consumer_complaints(records, &FilterRules::default());
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.kept[0].record_id, "1");
        assert_eq!(out.dropped[0].1, DropReason::DuplicateNarrative);
    }

    #[test]
    fn filter_matching_nothing_is_empty() {
        let out = filter_consumer_complaints(vec![record("1", "x", "INS")], &FilterRules::default());
        assert!(out.kept.is_empty());
    }

    #[test]
    fn split_ten_records() {
        let records: Vec<_> = (0..10).map(|i| record(&i.to_string(), "n", "EVOQ")).collect();
        for seed in [0, 1, 99] {
            let s = split_corpus(records.clone(), 0.9, seed).unwrap();
            assert_eq!((s.train.len(), s.heldout.len()), (9, 1));
        }
    }

    #[test]
    fn train_size_uses_floor() {
        // 0.9 * 502445 = 452200.5
        assert_eq!(train_size(0.9, 502_445), 452_200);
        assert_eq!(train_size(0.7, 10), 7);
        assert_eq!(train_size(0.9, 10), 9);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(matches!(split_corpus(vec![], 0.9, 1), Err(CorpusError::EmptyCorpus)));
        let r = vec![record("1", "a", "EVOQ")];
        assert!(matches!(split_corpus(r.clone(), 1.0, 1), Err(CorpusError::BadRatio(_))));
        assert!(matches!(split_corpus(r, 0.0, 1), Err(CorpusError::BadRatio(_))));
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let records: Vec<_> = (0..200).map(|i| record(&i.to_string(), "n", "EVOQ")).collect();
        let a = split_corpus(records.clone(), 0.9, 42).unwrap();
        let b = split_corpus(records.iter().rev().cloned().collect(), 0.9, 42).unwrap();
        let c = split_corpus(records, 0.9, 43).unwrap();
        assert_eq!(
            serde_json::to_vec(&a.manifest("h")).unwrap(),
            serde_json::to_vec(&b.manifest("h")).unwrap()
        );
        assert_ne!(a.manifest("h").heldout, c.manifest("h").heldout);
    }

    #[test]
    fn stats_examples() {
        let d = length_descriptives(&[1, 30, 41, 43, 71], "words").unwrap();
        assert_eq!((d.minimum, d.q25, d.median, d.q75, d.maximum), (1, 30, 41, 43, 71));
        assert!((d.mean - 37.2).abs() < 1e-12);
        let d = length_descriptives(&[5, 5, 5], "words").unwrap();
        assert_eq!(d.mean, 5.0);
        assert_eq!((d.minimum, d.q25, d.median, d.q75, d.maximum), (5, 5, 5, 5, 5));
        assert!(matches!(length_descriptives(&[], "w"), Err(CorpusError::NoSequences)));
    }

    #[test]
    fn nearest_rank_on_four_values() {
        // ranks ceil(0.25*4)=1, ceil(0.5*4)=2, ceil(0.75*4)=3
        let d = length_descriptives(&[10, 20, 30, 40], "w").unwrap();
        assert_eq!((d.q25, d.median, d.q75), (10, 20, 30));
    }

    #[test]
    fn stats_table_layout() {
        let d = length_descriptives(&[1, 30, 41, 43, 71], "raw data").unwrap();
        let md = stats_markdown(std::slice::from_ref(&d));
        assert!(md.contains("| raw data | 37.20 | 1 | 30 | 41 | 43 | 71 |"));
        let csv = stats_csv("h", &[d]);
        assert!(csv.contains("sequences,avg. length,min,25%,50%,75%,max"));
        assert!(csv.contains("raw data,37.20,1,30,41,43,71"));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn stats_are_order_invariant(mut lengths in prop::collection::vec(0usize..500, 1..60), seed in any::<u64>()) {
            let a = length_descriptives(&lengths, "w").unwrap();
            lengths.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b = length_descriptives(&lengths, "w").unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.minimum <= a.q25 && a.q25 <= a.median && a.median <= a.q75 && a.q75 <= a.maximum);
            prop_assert!(a.mean >= a.minimum as f64 && a.mean <= a.maximum as f64);
        }

        #[test]
        fn filter_then_split_is_partition(
            channels in prop::collection::vec(0u8..3, 1..80),
            texts in prop::collection::vec(0u8..20, 80),
            ratio in 0.05f64..0.95,
            seed in any::<u64>(),
        ) {
            let names = ["EVOQ", "INS", "CAG"];
            let records: Vec<_> = channels.iter().enumerate()
                .map(|(i, &c)| record(&i.to_string(), &format!("text {}", texts[i]), names[c as usize]))
                .collect();
            let ids: Vec<String> = records.iter().map(|r| r.record_id.clone()).collect();
            let outcome = filter_consumer_complaints(records, &FilterRules::default());
            prop_assume!(!outcome.kept.is_empty());
            let n = outcome.kept.len();
            let split = split_corpus(outcome.kept.clone(), ratio, seed).unwrap();
            prop_assert!(is_partition(&ids, &outcome, &split));
            let expected = (ratio * n as f64).round() as i64;
            prop_assert!((split.train.len() as i64 - expected).abs() <= 1);
        }
    }
}
