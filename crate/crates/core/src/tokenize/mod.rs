//! Title tokenizers: a frequency-capped word vocabulary for the
//! convolutional and recurrent classifiers, and WordPiece for the
//! transformer.

mod word;
mod wordpiece;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use word::{word_tokens, WordVocab, PAD_ID, UNK_ID};
pub use wordpiece::{WordPieceVocab, CLS, MAX_WORD_CHARS, PAD, SEP, UNK};

/// Fixed-length encoded title.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub real_length: usize,
}

impl TokenSequence {
    pub(crate) fn from_ids(mut ids: Vec<u32>, max_len: usize, pad: u32) -> Self {
        ids.truncate(max_len);
        let real_length = ids.len();
        let mut attention_mask = vec![1u8; real_length];
        ids.resize(max_len, pad);
        attention_mask.resize(max_len, 0);
        TokenSequence {
            ids,
            attention_mask,
            real_length,
        }
    }

    pub fn max_len(&self) -> usize {
        self.ids.len()
    }
}

/// The tokenizer a model is bound to, including its sequence length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tokenizer {
    Word { vocab: WordVocab, max_len: usize },
    WordPiece { vocab: WordPieceVocab, max_len: usize },
}

impl Tokenizer {
    pub fn encode(&self, title: &str) -> TokenSequence {
        match self {
            Tokenizer::Word { vocab, max_len } => vocab.encode(title, *max_len),
            Tokenizer::WordPiece { vocab, max_len } => vocab.encode(title, *max_len),
        }
    }

    pub fn max_len(&self) -> usize {
        match self {
            Tokenizer::Word { max_len, .. } | Tokenizer::WordPiece { max_len, .. } => *max_len,
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            Tokenizer::Word { vocab, .. } => vocab.len(),
            Tokenizer::WordPiece { vocab, .. } => vocab.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Tokenizer::Word { .. } => "word",
            Tokenizer::WordPiece { .. } => "word_piece",
        }
    }

    /// SHA-256 over kind, length and token list, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.kind().as_bytes());
        h.update((self.max_len() as u64).to_le_bytes());
        let tokens: &[String] = match self {
            Tokenizer::Word { vocab, .. } => vocab.tokens(),
            Tokenizer::WordPiece { vocab, .. } => vocab.tokens(),
        };
        for t in tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_tracks_vocab_and_length() {
        let v = WordVocab::build(["a b", "b c"], 4);
        let a = Tokenizer::Word {
            vocab: v.clone(),
            max_len: 8,
        };
        let b = Tokenizer::Word { vocab: v, max_len: 9 };
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        let json = serde_json::to_string(&a).unwrap();
        let back: Tokenizer = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }
}
