//! WordPiece vocabularies: induction by greedy pair merging, loading from
//! one-token-per-line files, greedy longest-match encoding and decoding.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::TokenSequence;
use crate::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
const SPECIALS: [&str; 4] = [PAD, UNK, CLS, SEP];
const CONTINUATION: &str = "##";

/// Words longer than this many characters encode to `[UNK]` directly.
pub const MAX_WORD_CHARS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct WordPieceVocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    pad: u32,
    unk: u32,
    cls: u32,
    sep: u32,
}

impl From<Vec<String>> for WordPieceVocab {
    fn from(tokens: Vec<String>) -> Self {
        WordPieceVocab::from_tokens(tokens)
    }
}

impl From<WordPieceVocab> for Vec<String> {
    fn from(v: WordPieceVocab) -> Self {
        v.tokens
    }
}

fn normalize(text: &str) -> String {
    text.nfc().collect::<String>().to_lowercase()
}

/// Merge a piece with a continuation piece: `"l" + "##o" = "lo"`,
/// `"##e" + "##s" = "##es"`.
fn merge_pieces(left: &str, right: &str) -> String {
    let mut s = String::with_capacity(left.len() + right.len());
    s.push_str(left);
    s.push_str(right.strip_prefix(CONTINUATION).unwrap_or(right));
    s
}

impl WordPieceVocab {
    /// Build from a complete token list. Specials missing from the list are
    /// appended at the end.
    fn from_tokens(mut tokens: Vec<String>) -> Self {
        for s in SPECIALS {
            if !tokens.iter().any(|t| t == s) {
                tokens.push(s.to_string());
            }
        }
        let index: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        WordPieceVocab {
            pad: index[PAD],
            unk: index[UNK],
            cls: index[CLS],
            sep: index[SEP],
            tokens,
            index,
        }
    }

    /// Induce a vocabulary of at most `target_size` pieces.
    ///
    /// Words start as single characters, non-initial characters carrying
    /// the `##` marker. The most frequent adjacent pair (ties: smaller left
    /// piece, then smaller right piece) is merged until the vocabulary is
    /// full or no pair remains.
    pub fn build<'a>(titles: impl IntoIterator<Item = &'a str>, target_size: usize) -> Result<Self> {
        let mut word_freq: BTreeMap<String, u64> = BTreeMap::new();
        for title in titles {
            for w in normalize(title).split_whitespace() {
                *word_freq.entry(w.to_string()).or_insert(0) += 1;
            }
        }
        let mut words: Vec<(Vec<String>, u64)> = word_freq
            .into_iter()
            .map(|(w, f)| {
                let pieces = w
                    .chars()
                    .enumerate()
                    .map(|(i, c)| {
                        if i == 0 {
                            c.to_string()
                        } else {
                            format!("{CONTINUATION}{c}")
                        }
                    })
                    .collect();
                (pieces, f)
            })
            .collect();

        let mut alphabet: Vec<String> = words
            .iter()
            .flat_map(|(p, _)| p.iter().cloned())
            .collect::<HashSet<_>>()
            .into_iter()
            .filter(|p| !SPECIALS.contains(&p.as_str()))
            .collect();
        alphabet.sort();
        if target_size < SPECIALS.len() + alphabet.len() {
            return Err(Error::Vocab(format!(
                "target size {target_size} cannot hold {} specials plus an alphabet of {}",
                SPECIALS.len(),
                alphabet.len()
            )));
        }

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(alphabet);
        let mut present: HashSet<String> = tokens.iter().cloned().collect();

        while tokens.len() < target_size {
            let mut pair_counts: HashMap<(&str, &str), u64> = HashMap::new();
            for (pieces, f) in &words {
                for w in pieces.windows(2) {
                    *pair_counts.entry((w[0].as_str(), w[1].as_str())).or_insert(0) += f;
                }
            }
            let best = pair_counts
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                .map(|((l, r), _)| (l.to_string(), r.to_string()));
            let Some((left, right)) = best else { break };
            let merged = merge_pieces(&left, &right);
            for (pieces, _) in &mut words {
                if pieces.len() < 2 {
                    continue;
                }
                let mut out = Vec::with_capacity(pieces.len());
                let mut i = 0;
                while i < pieces.len() {
                    if i + 1 < pieces.len() && pieces[i] == left && pieces[i + 1] == right {
                        out.push(merged.clone());
                        i += 2;
                    } else {
                        out.push(std::mem::take(&mut pieces[i]));
                        i += 1;
                    }
                }
                *pieces = out;
            }
            if present.insert(merged.clone()) {
                tokens.push(merged);
            }
        }
        Ok(WordPieceVocab::from_tokens(tokens))
    }

    /// Load a one-token-per-line vocabulary file.
    ///
    /// A file without any special token gets the four specials prepended,
    /// so its first line becomes index 4. A file that already lists
    /// specials keeps every position verbatim.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines: Vec<String> = Vec::new();
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let tok = line.trim_end_matches('\r');
            if tok.is_empty() {
                return Err(Error::Vocab(format!("line {}: empty token", i + 1)));
            }
            if let Some(first) = seen.insert(tok, i + 1) {
                return Err(Error::Vocab(format!(
                    "line {}: duplicate token {tok:?} (first seen on line {first})",
                    i + 1
                )));
            }
            lines.push(tok.to_string());
        }
        let has_specials = lines.iter().any(|t| SPECIALS.contains(&t.as_str()));
        let tokens = if has_specials {
            lines
        } else {
            SPECIALS.iter().map(|s| s.to_string()).chain(lines).collect()
        };
        Ok(WordPieceVocab::from_tokens(tokens))
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn pad_id(&self) -> u32 {
        self.pad
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    /// Greedy longest-match-first segmentation of one word. `None` when some
    /// position has no matching piece.
    pub fn segment_word(&self, word: &str) -> Option<Vec<u32>> {
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
            return None;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut candidate = String::new();
        while start < chars.len() {
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                candidate.clear();
                if start > 0 {
                    candidate.push_str(CONTINUATION);
                }
                candidate.extend(&chars[start..end]);
                if let Some(&id) = self.index.get(candidate.as_str()) {
                    found = Some((id, end));
                    break;
                }
            }
            let (id, end) = found?;
            pieces.push(id);
            start = end;
        }
        Some(pieces)
    }

    /// Content piece ids for a title (no `[CLS]`/`[SEP]`).
    pub fn pieces(&self, title: &str) -> Vec<u32> {
        normalize(title)
            .split_whitespace()
            .flat_map(|w| self.segment_word(w).unwrap_or_else(|| vec![self.unk]))
            .collect()
    }

    /// `[CLS] pieces… [SEP]` padded to `max_len`; pieces are truncated so
    /// `[SEP]` always fits.
    pub fn encode(&self, title: &str, max_len: usize) -> TokenSequence {
        assert!(max_len >= 2, "max_len must leave room for [CLS] and [SEP]");
        let mut content = self.pieces(title);
        content.truncate(max_len - 2);
        let mut ids = Vec::with_capacity(max_len);
        ids.push(self.cls);
        ids.extend(content);
        ids.push(self.sep);
        TokenSequence::from_ids(ids, max_len, self.pad)
    }

    /// Inverse of [`encode`](Self::encode) for segmentable titles. Special
    /// tokens are dropped and `##` pieces are glued to their predecessor.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or(Error::TokenOutOfRange {
                id: id as usize,
                size: self.len(),
            })?;
            if [self.pad, self.unk, self.cls, self.sep].contains(&id) {
                continue;
            }
            match tok.strip_prefix(CONTINUATION) {
                Some(rest) if !out.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        Ok(out)
    }
}
