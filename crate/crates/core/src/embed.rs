//! Embedding matrices for the word-level classifiers: random
//! initialization, loading pre-trained text vector files, and a small
//! skip-gram (negative sampling) pretrainer for offline use.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::info;
use rand::distributions::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::Tensor;
use crate::seed;
use crate::tokenize::{word_tokens, WordVocab, PAD_ID, UNK_ID};
use crate::{Error, Result};

/// Standard deviation of randomly initialized rows.
pub const INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSource {
    Random,
    Loaded,
    PretrainedLocal,
}

/// A `[vocab, dim]` matrix whose rows follow word-vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub matrix: Tensor<f32>,
    pub source: EmbeddingSource,
    /// Fraction of non-special vocabulary rows taken from the source file.
    pub coverage: f64,
}

impl EmbeddingMatrix {
    pub fn vocab(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn row(&self, id: u32) -> &[f32] {
        let d = self.dim();
        &self.matrix.data()[id as usize * d..(id as usize + 1) * d]
    }
}

/// Rows drawn from N(0, 0.01²); the PAD row is zero.
pub fn init_random(vocab: usize, dim: usize, rng: &mut impl Rng) -> Result<EmbeddingMatrix> {
    if dim == 0 || vocab == 0 {
        return Err(Error::Config(format!("embedding shape [{vocab}, {dim}] is empty")));
    }
    let normal = Normal::new(0.0, INIT_STD).expect("positive std");
    let mut data: Vec<f32> = (0..vocab * dim).map(|_| normal.sample(rng) as f32).collect();
    data[PAD_ID as usize * dim..(PAD_ID as usize + 1) * dim].fill(0.0);
    Ok(EmbeddingMatrix {
        matrix: Tensor::new(&[vocab, dim], data)?,
        source: EmbeddingSource::Random,
        coverage: 0.0,
    })
}

/// Read a text vector file (`token v1 … v_dim` per line, optional
/// `count dim` header). Vocabulary words found in the file get its vector;
/// the rest keep their random initialization.
pub fn load_vectors(path: &Path, vocab: &WordVocab, dim: usize, rng: &mut impl Rng) -> Result<EmbeddingMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_vectors(BufReader::new(file), vocab, dim, rng).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_vectors(
    reader: impl BufRead,
    vocab: &WordVocab,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<EmbeddingMatrix> {
    let mut m = init_random(vocab.len(), dim, rng)?;
    let mut covered = vec![false; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<vectors>", e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let values: Vec<&str> = fields.collect();
        if line_no == 1 && values.len() == 1 {
            if let (Ok(_), Ok(header_dim)) = (token.parse::<usize>(), values[0].parse::<usize>()) {
                if header_dim != dim {
                    return Err(Error::MalformedRow {
                        line: 1,
                        message: format!("header declares dimension {header_dim}, expected {dim}"),
                    });
                }
                continue;
            }
        }
        if values.len() != dim {
            return Err(Error::MalformedRow {
                line: line_no,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        let Some(id) = vocab.id(token) else {
            continue;
        };
        if id == PAD_ID || id == UNK_ID {
            continue;
        }
        let row = &mut m.matrix.data_mut()[id as usize * dim..(id as usize + 1) * dim];
        for (r, v) in row.iter_mut().zip(&values) {
            *r = v.parse::<f32>().map_err(|e| Error::MalformedRow {
                line: line_no,
                message: format!("bad value {v:?}: {e}"),
            })?;
        }
        covered[id as usize] = true;
    }
    let words = vocab.len().saturating_sub(2);
    let hits = covered.iter().filter(|&&c| c).count();
    m.coverage = if words == 0 { 0.0 } else { hits as f64 / words as f64 };
    m.source = EmbeddingSource::Loaded;
    info!(
        "loaded vectors for {hits} of {words} vocabulary words ({:.1}%)",
        100.0 * m.coverage
    );
    Ok(m)
}

/// Write `count dim` followed by one line per non-special vocabulary word.
/// Values use the shortest round-tripping decimal form, so reloading is
/// bit-exact.
pub fn save_vectors(path: &Path, m: &EmbeddingMatrix, vocab: &WordVocab) -> Result<()> {
    if m.vocab() != vocab.len() {
        return Err(Error::Shape(format!(
            "{} rows for vocabulary of {}",
            m.vocab(),
            vocab.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", vocab.len().saturating_sub(2), m.dim()).map_err(io)?;
    for (id, token) in vocab.tokens().iter().enumerate().skip(2) {
        write!(w, "{token}").map_err(io)?;
        for v in m.row(id as u32) {
            write!(w, " {v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 300,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
        }
    }
}

/// Unigram counts raised to 0.75 and normalized; PAD and UNK get zero mass.
pub fn noise_distribution(vocab: &WordVocab) -> Vec<f64> {
    let mut w: Vec<f64> = (0..vocab.len() as u32)
        .map(|id| {
            if id == PAD_ID || id == UNK_ID {
                0.0
            } else {
                (vocab.frequency(id).unwrap_or(0) as f64).powf(0.75)
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|v| *v /= total);
    }
    w
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Skip-gram with negative sampling over the given titles. Returns the
/// input (center-word) vectors.
pub fn sgns_pretrain<'a>(
    titles: impl IntoIterator<Item = &'a str>,
    vocab: &WordVocab,
    config: &SgnsConfig,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    if config.window == 0 {
        return Err(Error::Config("skip-gram window must be at least 1".into()));
    }
    let sentences: Vec<Vec<u32>> = titles
        .into_iter()
        .map(|t| {
            word_tokens(t)
                .iter()
                .filter_map(|w| vocab.id(w))
                .filter(|&id| id != UNK_ID)
                .collect()
        })
        .filter(|s: &Vec<u32>| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(Error::Empty("no in-vocabulary tokens to pretrain on".into()));
    }
    let dim = config.dim;
    let mut m = init_random(vocab.len(), dim, &mut seed::rng(seed::derive(seed, "sgns-init")))?;
    m.source = EmbeddingSource::PretrainedLocal;
    if config.epochs == 0 {
        return Ok(m);
    }
    let noise = WeightedIndex::new(noise_distribution(vocab)).map_err(|e| Error::Vocab(e.to_string()))?;
    let mut rng = seed::rng(seed::derive(seed, "sgns-train"));
    let input = m.matrix.data_mut();
    let mut output = vec![0.0f32; vocab.len() * dim];
    let lr = config.learning_rate as f32;
    let mut grad = vec![0.0f32; dim];
    for _ in 0..config.epochs {
        for sentence in &sentences {
            for (pos, &center) in sentence.iter().enumerate() {
                let reach = rng.gen_range(1..=config.window);
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = sentence[ctx_pos];
                    grad.fill(0.0);
                    let c = center as usize * dim;
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise.sample(&mut rng) as u32;
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let o = target as usize * dim;
                        let dot: f32 = (0..dim).map(|j| input[c + j] * output[o + j]).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for j in 0..dim {
                            grad[j] += g * output[o + j];
                            output[o + j] += g * input[c + j];
                        }
                    }
                    for j in 0..dim {
                        input[c + j] += grad[j];
                    }
                }
            }
        }
    }
    Ok(m)
}
