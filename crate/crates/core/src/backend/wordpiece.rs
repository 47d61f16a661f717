//! Greedy longest-match-first WordPiece tokenizer and a frequency-based
//! vocabulary builder for it.

use std::collections::HashMap;
use std::sync::Arc;

use super::{BackendError, Vocabulary, CLS, MASK, SEP};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const SPECIAL_TOKENS: [&str; 5] = [PAD, UNK, CLS, SEP, MASK];
const CONTINUATION: &str = "##";
const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Clone)]
pub struct WordPiece {
    vocab: Arc<Vocabulary>,
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || (!c.is_alphanumeric() && !c.is_whitespace())
}

/// Whitespace split, then every punctuation character becomes its own word.
/// Special tokens pass through untouched.
pub fn pre_tokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if SPECIAL_TOKENS.contains(&chunk) {
            out.push(chunk);
            continue;
        }
        let mut start = 0;
        for (i, c) in chunk.char_indices() {
            if is_punctuation(c) {
                if start < i {
                    out.push(&chunk[start..i]);
                }
                out.push(&chunk[i..i + c.len_utf8()]);
                start = i + c.len_utf8();
            }
        }
        if start < chunk.len() {
            out.push(&chunk[start..]);
        }
    }
    out
}

impl WordPiece {
    pub fn new(vocab: Arc<Vocabulary>) -> Result<Self, BackendError> {
        for special in SPECIAL_TOKENS {
            if vocab.id(special).is_none() {
                return Err(BackendError::Checkpoint {
                    handle: "vocabulary".into(),
                    message: format!("missing special token {special}"),
                });
            }
        }
        Ok(WordPiece { vocab })
    }

    /// Builds a vocabulary of at most `max_size` entries: the special tokens,
    /// every character seen (standalone and as a `##` continuation), then the
    /// most frequent words with at least `min_count` occurrences.
    pub fn build<S: AsRef<str>>(corpus: &[S], max_size: usize, min_count: usize) -> Result<Self, BackendError> {
        let mut words: HashMap<&str, usize> = HashMap::new();
        let mut chars: Vec<char> = Vec::new();
        for text in corpus {
            for w in pre_tokenize(text.as_ref()) {
                if SPECIAL_TOKENS.contains(&w) {
                    continue;
                }
                *words.entry(w).or_default() += 1;
                chars.extend(w.chars());
            }
        }
        chars.sort_unstable();
        chars.dedup();

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        for c in &chars {
            tokens.push(c.to_string());
        }
        for c in &chars {
            if !is_punctuation(*c) {
                tokens.push(format!("{CONTINUATION}{c}"));
            }
        }
        let mut ranked: Vec<(&str, usize)> = words
            .into_iter()
            .filter(|(w, n)| *n >= min_count && w.chars().count() > 1)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let room = max_size.saturating_sub(tokens.len());
        tokens.extend(ranked.into_iter().take(room).map(|(w, _)| w.to_owned()));
        WordPiece::new(Arc::new(Vocabulary::new(tokens)?))
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    /// Pieces of one pre-tokenized word; `[UNK]` when no segmentation exists.
    pub fn tokenize_word<'a>(&'a self, word: &str) -> Vec<&'a str> {
        if SPECIAL_TOKENS.contains(&word) {
            return vec![self.vocab.token(self.vocab.id(word).expect("special token"))];
        }
        let unk = || vec![self.vocab.token(self.vocab.id(UNK).expect("unk token"))];
        let chars: Vec<(usize, char)> = word.char_indices().collect();
        if chars.len() > MAX_WORD_CHARS {
            return unk();
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while end > start {
                let from = chars[start].0;
                let to = chars.get(end).map_or(word.len(), |c| c.0);
                let candidate = if start == 0 {
                    word[from..to].to_owned()
                } else {
                    format!("{CONTINUATION}{}", &word[from..to])
                };
                if let Some(id) = self.vocab.id(&candidate) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => pieces.push(self.vocab.token(id)),
                None => return unk(),
            }
            start = end;
        }
        pieces
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        pre_tokenize(text)
            .into_iter()
            .flat_map(|w| self.tokenize_word(w))
            .map(str::to_owned)
            .collect()
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        let unk = self.vocab.id(UNK).expect("unk token");
        tokens.iter().map(|t| self.vocab.id(t).unwrap_or(unk)).collect()
    }

    /// Tokens covering `words[index]` in the context of the whole sentence.
    pub fn word_pieces(&self, words: &[String], index: usize) -> Result<Vec<String>, BackendError> {
        let word = words.get(index).ok_or(BackendError::WordIndex {
            index,
            len: words.len(),
        })?;
        Ok(self.tokenize(word))
    }
}
