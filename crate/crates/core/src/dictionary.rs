//! Technical-term dictionary built from component descriptions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ComplaintRecord;
use crate::io::{self, ArtifactError};

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("every component description is empty; no terms to extract")]
    NoDescriptions,
    #[error("dictionary contains no terms after blocklist filtering")]
    Empty,
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("dictionary file '{path}': {message}")]
    BadFile { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DictionaryOptions {
    /// Connectives dropped after splitting.
    pub blocklist: BTreeSet<String>,
}

impl Default for DictionaryOptions {
    fn default() -> Self {
        DictionaryOptions {
            blocklist: ["and", "or", "of", "the"].into_iter().map(String::from).collect(),
        }
    }
}

/// Splits text into maximal runs of `[a-z0-9]` after lower-casing.
pub fn split_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit()))
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
}

fn split_lowered(text: &str) -> Vec<String> {
    split_words(&text.to_lowercase()).collect()
}

/// Distinct single-word terms with their frequency in the train corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermDictionary {
    frequencies: BTreeMap<String, u64>,
}

impl TermDictionary {
    /// Dictionary with every term at frequency 0. Terms are lower-cased; empty or
    /// whitespace-bearing inputs are skipped.
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let frequencies = terms
            .into_iter()
            .map(|t| t.as_ref().to_lowercase())
            .filter(|t| !t.is_empty() && !t.chars().any(char::is_whitespace))
            .map(|t| (t, 0))
            .collect();
        TermDictionary { frequencies }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.frequencies.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.frequencies.keys().map(String::as_str)
    }

    pub fn frequency(&self, term: &str) -> Option<u64> {
        self.frequencies.get(term).copied()
    }

    pub fn frequencies(&self) -> &BTreeMap<String, u64> {
        &self.frequencies
    }

    /// Terms by descending frequency, ties broken lexicographically.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut ranked: Vec<(&str, u64)> =
            self.frequencies.iter().map(|(t, &f)| (t.as_str(), f)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked
    }

    pub fn top(&self, n: usize) -> Vec<(&str, u64)> {
        let mut ranked = self.ranked();
        ranked.truncate(n);
        ranked
    }

    /// `term,frequency` CSV sorted like [`ranked`](Self::ranked).
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut rows = vec![vec!["term".to_string(), "frequency".to_string()]];
        rows.extend(self.ranked().into_iter().map(|(t, f)| vec![t.to_owned(), f.to_string()]));
        io::csv_with_header(config_hash, &rows)
    }

    pub fn save_csv(&self, path: &Path, config_hash: &str) -> Result<(), DictionaryError> {
        io::write_atomic(path, self.to_csv(config_hash).as_bytes())?;
        Ok(())
    }

    /// Loads a CSV written by [`save_csv`](Self::save_csv); returns the stamped config hash.
    pub fn load_csv(path: &Path) -> Result<(Self, Option<String>), DictionaryError> {
        let text = fs::read_to_string(path).map_err(|e| ArtifactError::io(path, e))?;
        let hash = io::csv_config_hash(&text);
        let bad = |message: String| DictionaryError::BadFile {
            path: path.display().to_string(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut frequencies = BTreeMap::new();
        for row in reader.records() {
            let row = row.map_err(|e| bad(e.to_string()))?;
            let term = row.get(0).unwrap_or("").to_owned();
            let freq = row
                .get(1)
                .unwrap_or("")
                .parse::<u64>()
                .map_err(|e| bad(format!("frequency of '{term}': {e}")))?;
            if term.is_empty() || term.chars().any(|c| c.is_whitespace() || c.is_uppercase()) {
                return Err(bad(format!("invalid term '{term}'")));
            }
            frequencies.insert(term, freq);
        }
        Ok((TermDictionary { frequencies }, hash))
    }

    /// Markdown view laid out with terms as columns and a frequency row.
    pub fn top_markdown(&self, n: usize) -> String {
        let top = self.top(n);
        let terms: Vec<&str> = top.iter().map(|(t, _)| *t).collect();
        let freqs: Vec<String> = top.iter().map(|(_, f)| f.to_string()).collect();
        format!(
            "| term | {} |\n|---|{}\n| frequency | {} |\n",
            terms.join(" | "),
            "---|".repeat(terms.len()),
            freqs.join(" | ")
        )
    }
}

/// Splits every component description on characters outside `[a-z0-9]`,
/// drops blocklisted connectives and deduplicates. Frequencies start at 0.
pub fn build_dictionary(
    records: &[ComplaintRecord],
    options: &DictionaryOptions,
) -> Result<TermDictionary, DictionaryError> {
    if records
        .iter()
        .all(|r| r.component_description.trim().is_empty())
    {
        return Err(DictionaryError::NoDescriptions);
    }
    let terms: BTreeSet<String> = records
        .iter()
        .flat_map(|r| split_lowered(&r.component_description))
        .filter(|t| !options.blocklist.contains(t))
        .collect();
    if terms.is_empty() {
        return Err(DictionaryError::Empty);
    }
    Ok(TermDictionary::from_terms(terms))
}

/// Whole-word occurrence counts of dictionary terms in one shard of narratives.
pub fn count_shard<S: AsRef<str>>(dictionary: &TermDictionary, shard: &[S]) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for narrative in shard {
        for word in split_words(narrative.as_ref()) {
            if dictionary.contains(&word) {
                *counts.entry(word).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Returns the dictionary with frequencies replaced by whole-word occurrence
/// counts over `corpus`. Work is sharded across threads and summed.
pub fn count_term_frequencies<S: AsRef<str> + Sync>(
    dictionary: &TermDictionary,
    corpus: &[S],
) -> TermDictionary {
    let totals = corpus
        .par_chunks(4096)
        .map(|shard| count_shard(dictionary, shard))
        .reduce(HashMap::new, |mut acc, part| {
            for (term, n) in part {
                *acc.entry(term).or_insert(0) += n;
            }
            acc
        });
    let frequencies = dictionary
        .frequencies
        .keys()
        .map(|t| (t.clone(), totals.get(t).copied().unwrap_or(0)))
        .collect();
    TermDictionary { frequencies }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desc(d: &str) -> ComplaintRecord {
        ComplaintRecord {
            record_id: "1".into(),
            narrative: "x".into(),
            component_description: d.into(),
            source_channel: "EVOQ".into(),
            received_date: None,
        }
    }

    fn terms(d: &TermDictionary) -> Vec<&str> {
        d.terms().collect()
    }

    #[test]
    fn compound_description_splits_into_three_terms() {
        let d = build_dictionary(&[desc("SERVICE BRAKES, HYDRAULIC")], &DictionaryOptions::default())
            .unwrap();
        // independent route: the same split written with a regex-free char filter
        let raw = "SERVICE BRAKES, HYDRAULIC".to_lowercase();
        let mut oracle: Vec<&str> = raw
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|s| !s.is_empty())
            .collect();
        oracle.sort();
        assert_eq!(terms(&d), oracle);
        assert_eq!(terms(&d), vec!["brakes", "hydraulic", "service"]);
    }

    #[test]
    fn repeated_description_gives_one_entry() {
        let d = build_dictionary(&[desc("ENGINE"), desc("ENGINE")], &DictionaryOptions::default())
            .unwrap();
        assert_eq!(terms(&d), vec!["engine"]);
        assert_eq!(d.frequency("engine"), Some(0));
    }

    #[test]
    fn connectives_and_slashes() {
        let d = build_dictionary(
            &[desc("ENGINE AND ENGINE COOLING:ENGINE"), desc("AIR BAGS/SEAT BELTS")],
            &DictionaryOptions::default(),
        )
        .unwrap();
        assert_eq!(terms(&d), vec!["air", "bags", "belts", "cooling", "engine", "seat"]);
    }

    #[test]
    fn all_empty_descriptions_is_fatal() {
        let err = build_dictionary(&[desc(""), desc("  ")], &DictionaryOptions::default());
        assert!(matches!(err, Err(DictionaryError::NoDescriptions)));
        let err = build_dictionary(&[desc("AND / OF")], &DictionaryOptions::default());
        assert!(matches!(err, Err(DictionaryError::Empty)));
    }

    #[test]
    fn counts_whole_word_occurrences() {
        let d = TermDictionary::from_terms(["engine", "brake"]);
        let counted = count_term_frequencies(&d, &["engine stalls", "the engine engine", "brakes failed"]);
        assert_eq!(counted.frequency("engine"), Some(3));
        assert_eq!(counted.frequency("brake"), Some(0));
    }

    #[test]
    fn ranking_breaks_ties_lexicographically() {
        let d = TermDictionary::from_terms(["seat", "air", "engine"]);
        let d = count_term_frequencies(&d, &["seat air engine engine"]);
        assert_eq!(d.top(3), vec![("engine", 2), ("air", 1), ("seat", 1)]);
        assert!(d.top_markdown(2).starts_with("| term | engine | air |"));
    }

    #[test]
    fn csv_round_trip_keeps_hash() {
        let d = count_term_frequencies(&TermDictionary::from_terms(["gear", "shift"]), &["gear gear shift"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.csv");
        d.save_csv(&path, "cafe").unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "# config_hash=cafe\nterm,frequency\ngear,2\nshift,1\n");
        let (back, hash) = TermDictionary::load_csv(&path).unwrap();
        assert_eq!(back, d);
        assert_eq!(hash.as_deref(), Some("cafe"));
    }

    #[test]
    fn idempotent_over_own_output() {
        let d = build_dictionary(
            &[desc("SERVICE BRAKES, HYDRAULIC"), desc("POWER TRAIN:AUTOMATIC TRANSMISSION")],
            &DictionaryOptions::default(),
        )
        .unwrap();
        let again: Vec<_> = d.terms().map(desc).collect();
        assert_eq!(build_dictionary(&again, &DictionaryOptions::default()).unwrap(), d);
    }

    proptest! {
        #[test]
        fn frequencies_are_additive_over_shards(
            words in prop::collection::vec(prop::sample::select(vec!["engine", "brakes", "air", "x", "engines", "the"]), 0..200),
            cut in 0usize..50,
        ) {
            let dict = TermDictionary::from_terms(["engine", "brakes", "air"]);
            let narratives: Vec<String> = words.chunks(4).map(|c| c.join(" ")).collect();
            let cut = cut.min(narratives.len());
            let whole = count_term_frequencies(&dict, &narratives);
            let a = count_term_frequencies(&dict, &narratives[..cut]);
            let b = count_term_frequencies(&dict, &narratives[cut..]);
            let mut reversed = narratives.clone();
            reversed.reverse();
            prop_assert_eq!(&count_term_frequencies(&dict, &reversed), &whole);
            for t in dict.terms() {
                prop_assert_eq!(whole.frequency(t).unwrap(), a.frequency(t).unwrap() + b.frequency(t).unwrap());
            }
        }
    }
}
