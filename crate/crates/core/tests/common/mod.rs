#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use tubelean_core::corpus::TitleRecord;
use tubelean_core::models::{ArchitectureConfig, ClassifierModel, Scale, TitleClassifier, Variant};
use tubelean_core::tokenize::{Tokenizer, WordPieceVocab, WordVocab};
use tubelean_core::{seed, LeaningLabel, Result, NUM_CLASSES};

pub const KEYWORDS: [&str; NUM_CLASSES] = [
    "socialism",
    "progressive",
    "bipartisan",
    "woke",
    "conservative",
    "patriot",
];

const FILLER: [&str; 24] = [
    "news",
    "today",
    "report",
    "update",
    "video",
    "live",
    "week",
    "story",
    "latest",
    "world",
    "debate",
    "analysis",
    "breaking",
    "interview",
    "segment",
    "panel",
    "market",
    "city",
    "school",
    "health",
    "court",
    "vote",
    "plan",
    "talk",
];

/// Titles of five filler words with one class keyword at a random position.
pub fn keyword_corpus(per_class: &[usize; NUM_CLASSES], s: u64) -> Vec<TitleRecord> {
    let mut rng = seed::rng(s);
    let mut out = Vec::new();
    for (c, kw) in KEYWORDS.iter().enumerate() {
        for i in 0..per_class[c] {
            let mut words: Vec<&str> = (0..5).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
            words.insert(rng.gen_range(0..=words.len()), kw);
            out.push(TitleRecord::new(
                &format!("{s}-{c}-{i}"),
                "synthetic",
                &words.join(" "),
                LeaningLabel::from_index(c),
            ));
        }
    }
    out.shuffle(&mut rng);
    out
}

pub fn tokenizer_for(variant: Variant, records: &[TitleRecord], max_len: usize) -> Tokenizer {
    let titles = records.iter().map(|r| r.title.as_str());
    if variant.word_level() {
        Tokenizer::Word {
            vocab: WordVocab::build(titles, 10_000),
            max_len,
        }
    } else {
        Tokenizer::WordPiece {
            vocab: WordPieceVocab::build(titles, 300).unwrap(),
            max_len,
        }
    }
}

pub fn desk_model(variant: Variant, records: &[TitleRecord], s: u64) -> ClassifierModel {
    let mut c = ArchitectureConfig::preset(variant, Scale::Desk);
    let tok = tokenizer_for(variant, records, c.max_len);
    c.vocab_size = tok.vocab_size();
    ClassifierModel::build(&c, tok, None, s).unwrap()
}

/// Returns a fixed label for every title listed, keyed by title text.
pub struct TableStub(pub BTreeMap<String, LeaningLabel>);

impl TitleClassifier for TableStub {
    fn classify_batch(&self, titles: &[&str]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        Ok(titles
            .iter()
            .map(|t| {
                let mut p = [0.0; NUM_CLASSES];
                p[self.0[*t].index()] = 1.0;
                p
            })
            .collect())
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
