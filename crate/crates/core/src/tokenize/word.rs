use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

use super::TokenSequence;
use crate::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

fn is_separator(c: char) -> bool {
    use GeneralCategory::*;
    c.is_whitespace()
        || matches!(
            get_general_category(c),
            ConnectorPunctuation
                | DashPunctuation
                | OpenPunctuation
                | ClosePunctuation
                | InitialPunctuation
                | FinalPunctuation
                | OtherPunctuation
                | MathSymbol
                | CurrencySymbol
                | ModifierSymbol
                | OtherSymbol
        )
}

/// Lowercased word tokens; whitespace and Unicode punctuation/symbol
/// characters separate words and are discarded.
pub fn word_tokens(title: &str) -> Vec<String> {
    let lowered: String = title.nfc().collect::<String>().to_lowercase();
    lowered
        .split(is_separator)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Frequency-ranked word vocabulary with `<pad>`=0 and `<unk>`=1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "WordVocabRepr", into = "WordVocabRepr")]
pub struct WordVocab {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, u32>,
    max_size: usize,
}

#[derive(Serialize, Deserialize)]
struct WordVocabRepr {
    max_size: usize,
    tokens: Vec<String>,
    freqs: Vec<u64>,
}

impl From<WordVocabRepr> for WordVocab {
    fn from(r: WordVocabRepr) -> Self {
        WordVocab::from_parts(r.tokens, r.freqs, r.max_size)
    }
}

impl From<WordVocab> for WordVocabRepr {
    fn from(v: WordVocab) -> Self {
        WordVocabRepr {
            max_size: v.max_size,
            tokens: v.tokens,
            freqs: v.freqs,
        }
    }
}

impl WordVocab {
    fn from_parts(tokens: Vec<String>, freqs: Vec<u64>, max_size: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        WordVocab {
            tokens,
            freqs,
            index,
            max_size,
        }
    }

    /// Keep the `max_size - 2` most frequent words, ties broken
    /// lexicographically.
    pub fn build<'a>(titles: impl IntoIterator<Item = &'a str>, max_size: usize) -> Self {
        assert!(max_size >= 2, "word vocabulary needs room for <pad> and <unk>");
        let mut counts: HashMap<String, u64> = HashMap::new();
        for title in titles {
            for tok in word_tokens(title) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - 2);
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut freqs = vec![0, 0];
        for (t, f) in ranked {
            tokens.push(t);
            freqs.push(f);
        }
        WordVocab::from_parts(tokens, freqs, max_size)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn frequency(&self, id: u32) -> Option<u64> {
        self.freqs.get(id as usize).copied()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn ids(&self, title: &str) -> Vec<u32> {
        word_tokens(title)
            .iter()
            .map(|t| self.id(t).unwrap_or(UNK_ID))
            .collect()
    }

    pub fn encode(&self, title: &str, max_len: usize) -> TokenSequence {
        TokenSequence::from_ids(self.ids(title), max_len, PAD_ID)
    }

    /// Write `token<TAB>frequency` lines in index order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (t, f) in self.tokens.iter().zip(&self.freqs) {
            writeln!(w, "{t}\t{f}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        let mut freqs = Vec::new();
        let mut seen = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let (tok, freq) = line
                .split_once('\t')
                .ok_or_else(|| Error::Vocab(format!("line {}: expected token<TAB>frequency", i + 1)))?;
            let freq: u64 = freq
                .trim()
                .parse()
                .map_err(|_| Error::Vocab(format!("line {}: bad frequency {freq:?}", i + 1)))?;
            if seen.insert(tok.to_string(), i).is_some() {
                return Err(Error::Vocab(format!("line {}: duplicate token {tok:?}", i + 1)));
            }
            tokens.push(tok.to_string());
            freqs.push(freq);
        }
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::Vocab("word vocabulary must start with <pad> and <unk>".into()));
        }
        let max_size = tokens.len();
        Ok(WordVocab::from_parts(tokens, freqs, max_size))
    }
}
