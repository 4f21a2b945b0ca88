//! The three title classifiers (word-level CNN, word-level BiLSTM and a
//! BERT-style encoder) behind one forward/backward/predict contract.

mod bert;
mod bilstm;
mod check;
mod cnn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::nn::{Mode, Module, Parameter, Real, RngState, Tensor};
use crate::tokenize::{TokenSequence, Tokenizer};
use crate::{seed, Error, LeaningLabel, Result, NUM_CLASSES};

pub use bert::{BertCache, BertNet};
pub use bilstm::{BiLstmCache, BiLstmNet};
pub use check::{grad_check_model, ModelGradCheck};
pub use cnn::{CnnCache, CnnNet};

/// Shrinks the class-logit layer at init so a fresh model starts close to
/// uniform output.
pub const OUTPUT_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Word2vecCnn,
    GloveBilstm,
    Bert,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Word2vecCnn, Variant::GloveBilstm, Variant::Bert];

    /// Short preset name used on the command line.
    pub fn preset_name(self) -> &'static str {
        match self {
            Variant::Word2vecCnn => "cnn",
            Variant::GloveBilstm => "bilstm",
            Variant::Bert => "bert",
        }
    }

    /// Whether the variant reads word-level ids (as opposed to WordPiece).
    pub fn word_level(self) -> bool {
        self != Variant::Bert
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.preset_name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" | "word2vec_cnn" => Ok(Variant::Word2vecCnn),
            "bilstm" | "glove_bilstm" => Ok(Variant::GloveBilstm),
            "bert" => Ok(Variant::Bert),
            other => Err(Error::Config(format!("unknown model variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Published sizes; too large to train on a desk machine.
    Paper,
    /// Shrunken sizes that train in seconds.
    Desk,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::Config(format!("unknown scale {other:?}"))),
        }
    }
}

/// How word-level embedding rows start out and whether they train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingScenario {
    Random,
    Frozen,
    Finetune,
}

/// Shape and regularization settings for one classifier. Fields a variant
/// does not use are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub variant: Variant,
    pub vocab_size: usize,
    pub max_len: usize,
    /// Word vector width, or the hidden size H for the transformer.
    pub embed_dim: usize,
    pub scenario: EmbeddingScenario,
    pub num_classes: usize,
    pub conv_filters: usize,
    pub conv_width: usize,
    pub pool_size: usize,
    pub dense_units: usize,
    /// Dropout before the output layer (CNN) or between head layers (BERT).
    pub dropout: f64,
    pub lstm_units: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Hidden widths of the transformer's classification head.
    pub head_units: Vec<usize>,
}

impl ArchitectureConfig {
    pub fn preset(variant: Variant, scale: Scale) -> Self {
        let paper = scale == Scale::Paper;
        let mut c = ArchitectureConfig {
            variant,
            vocab_size: 50_000,
            max_len: if paper { 100 } else { 32 },
            embed_dim: if paper { 300 } else { 16 },
            scenario: EmbeddingScenario::Random,
            num_classes: NUM_CLASSES,
            conv_filters: if paper { 512 } else { 32 },
            conv_width: 3,
            pool_size: 3,
            dense_units: if paper { 512 } else { 32 },
            dropout: 0.7,
            lstm_units: if paper { 64 } else { 32 },
            layers: 0,
            heads: 0,
            ffn_dim: 0,
            head_units: Vec::new(),
        };
        match variant {
            Variant::Word2vecCnn => {
                c.vocab_size = if paper { 700_000 } else { 5_000 };
            }
            Variant::GloveBilstm => {
                c.vocab_size = if paper { 50_000 } else { 5_000 };
                c.dropout = 0.0;
            }
            Variant::Bert => {
                c.vocab_size = if paper { 30_522 } else { 2_000 };
                c.embed_dim = if paper { 768 } else { 64 };
                c.layers = if paper { 12 } else { 2 };
                c.heads = if paper { 12 } else { 2 };
                c.ffn_dim = 4 * c.embed_dim;
                c.head_units = vec![512, 1024];
                c.dropout = 0.3;
                c.scenario = EmbeddingScenario::Finetune;
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes != NUM_CLASSES {
            return bad(format!("num_classes must be {NUM_CLASSES}, got {}", self.num_classes));
        }
        if self.vocab_size < 2 || self.max_len == 0 || self.embed_dim == 0 {
            return bad(format!(
                "vocab_size {}, max_len {}, embed_dim {} must be positive",
                self.vocab_size, self.max_len, self.embed_dim
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        match self.variant {
            Variant::Word2vecCnn => {
                if self.conv_filters == 0 || self.dense_units == 0 || self.conv_width == 0 || self.pool_size == 0 {
                    return bad("cnn widths must be positive".into());
                }
                if self.max_len < self.conv_width + self.pool_size - 1 {
                    return bad(format!(
                        "max_len {} too short for conv width {} and pool {}",
                        self.max_len, self.conv_width, self.pool_size
                    ));
                }
            }
            Variant::GloveBilstm => {
                if self.lstm_units == 0 {
                    return bad("lstm_units must be positive".into());
                }
            }
            Variant::Bert => {
                if self.layers == 0 || self.heads == 0 || self.ffn_dim == 0 {
                    return bad("bert layers, heads and ffn_dim must be positive".into());
                }
                if self.embed_dim % self.heads != 0 {
                    return bad(format!(
                        "hidden {} not divisible by {} heads",
                        self.embed_dim, self.heads
                    ));
                }
                if self.max_len < 2 {
                    return bad("bert max_len must leave room for [CLS] and [SEP]".into());
                }
                if self.scenario == EmbeddingScenario::Frozen {
                    return bad("the transformer trains its token embeddings".into());
                }
            }
        }
        Ok(())
    }
}

/// A batch of encoded titles, row-major `[batch, len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub batch: usize,
    pub len: usize,
}

impl TokenBatch {
    pub fn from_sequences(seqs: &[TokenSequence]) -> Result<Self> {
        let len = seqs.first().map(TokenSequence::max_len).unwrap_or(0);
        let mut ids = Vec::with_capacity(seqs.len() * len);
        let mut mask = Vec::with_capacity(seqs.len() * len);
        for s in seqs {
            if s.max_len() != len {
                return Err(Error::Shape(format!(
                    "mixed sequence lengths {len} and {}",
                    s.max_len()
                )));
            }
            ids.extend_from_slice(&s.ids);
            mask.extend_from_slice(&s.attention_mask);
        }
        Ok(TokenBatch {
            ids,
            mask,
            batch: seqs.len(),
            len,
        })
    }

    pub fn encode(tokenizer: &Tokenizer, titles: &[&str]) -> Result<Self> {
        let seqs: Vec<TokenSequence> = titles.iter().map(|t| tokenizer.encode(t)).collect();
        let mut b = Self::from_sequences(&seqs)?;
        b.len = tokenizer.max_len();
        Ok(b)
    }
}

#[derive(Debug, Clone)]
pub enum Network<T: Real> {
    Cnn(CnnNet<T>),
    BiLstm(BiLstmNet<T>),
    Bert(BertNet<T>),
}

#[derive(Debug, Clone)]
pub enum ForwardCache<T: Real> {
    Cnn(CnnCache<T>),
    BiLstm(BiLstmCache<T>),
    Bert(BertCache<T>),
}

/// A built classifier: configuration, parameters and the tokenizer it reads.
#[derive(Debug, Clone)]
pub struct ClassifierModel<T: Real = f32> {
    pub config: ArchitectureConfig,
    pub network: Network<T>,
    pub tokenizer: Tokenizer,
}

impl<T: Real> ClassifierModel<T> {
    /// Build a freshly initialized model. Word-level variants take their
    /// embedding rows from `embeddings` when the scenario asks for
    /// pre-trained vectors, and draw them at random otherwise.
    pub fn build(
        config: &ArchitectureConfig,
        tokenizer: Tokenizer,
        embeddings: Option<&EmbeddingMatrix>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if tokenizer.vocab_size() != config.vocab_size || tokenizer.max_len() != config.max_len {
            return Err(Error::Config(format!(
                "tokenizer ({} tokens, max_len {}) does not match config ({} tokens, max_len {})",
                tokenizer.vocab_size(),
                tokenizer.max_len(),
                config.vocab_size,
                config.max_len
            )));
        }
        let word_tokenizer = matches!(tokenizer, Tokenizer::Word { .. });
        if word_tokenizer != config.variant.word_level() {
            return Err(Error::Config(format!(
                "{} model cannot use a {} tokenizer",
                config.variant,
                tokenizer.kind()
            )));
        }
        let mut rng = seed::rng(seed::derive(seed, "model-init"));
        let network = match config.variant {
            Variant::Word2vecCnn => {
                Network::Cnn(CnnNet::new(config, word_table(config, embeddings, &mut rng)?, &mut rng))
            }
            Variant::GloveBilstm => Network::BiLstm(BiLstmNet::new(
                config,
                word_table(config, embeddings, &mut rng)?,
                &mut rng,
            )),
            Variant::Bert => Network::Bert(BertNet::new(config, &mut rng)?),
        };
        Ok(ClassifierModel {
            config: config.clone(),
            network,
            tokenizer,
        })
    }

    /// Forward pass to logits `[batch, 6]`. Train mode applies dropout
    /// (drawing masks from `rng`) and batch statistics.
    pub fn forward(&self, batch: &TokenBatch, mode: Mode, rng: &mut RngState) -> Result<(Tensor<T>, ForwardCache<T>)> {
        if batch.len != self.config.max_len {
            return Err(Error::Shape(format!(
                "batch encoded to length {}, model expects {}",
                batch.len, self.config.max_len
            )));
        }
        if batch.batch == 0 {
            return Err(Error::Empty("forward pass over an empty batch".into()));
        }
        if let Some(&id) = batch.ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id: id as usize,
                size: self.config.vocab_size,
            });
        }
        Ok(match &self.network {
            Network::Cnn(n) => {
                let (y, c) = n.forward(batch, mode, rng)?;
                (y, ForwardCache::Cnn(c))
            }
            Network::BiLstm(n) => {
                let (y, c) = n.forward(batch)?;
                (y, ForwardCache::BiLstm(c))
            }
            Network::Bert(n) => {
                let (y, c) = n.forward(batch, mode, rng)?;
                (y, ForwardCache::Bert(c))
            }
        })
    }

    /// Accumulate parameter gradients for `dlogits`.
    pub fn backward(&mut self, cache: &ForwardCache<T>, dlogits: &Tensor<T>) -> Result<()> {
        match (&mut self.network, cache) {
            (Network::Cnn(n), ForwardCache::Cnn(c)) => n.backward(c, dlogits),
            (Network::BiLstm(n), ForwardCache::BiLstm(c)) => n.backward(c, dlogits),
            (Network::Bert(n), ForwardCache::Bert(c)) => n.backward(c, dlogits),
            _ => return Err(Error::Shape("forward cache from a different architecture".into())),
        }
        Ok(())
    }

    /// Fold a train-mode pass's batch statistics into running statistics.
    pub fn commit(&mut self, cache: &ForwardCache<T>) {
        if let (Network::Cnn(n), ForwardCache::Cnn(c)) = (&mut self.network, cache) {
            n.commit(c);
        }
    }

    /// Eval-mode class probabilities, one row per sequence.
    pub fn probabilities(&self, batch: &TokenBatch) -> Result<Vec<[f64; NUM_CLASSES]>> {
        let (logits, _) = self.forward(batch, Mode::Eval, &mut RngState::new(0))?;
        Ok(logits
            .data()
            .chunks_exact(NUM_CLASSES)
            .map(|row| {
                let mut p = [0.0f64; NUM_CLASSES];
                for (d, &v) in p.iter_mut().zip(row) {
                    *d = v.as_f64();
                }
                softmax6(&mut p);
                p
            })
            .collect())
    }

    pub fn cast<U: Real>(&self) -> ClassifierModel<U> {
        ClassifierModel {
            config: self.config.clone(),
            network: match &self.network {
                Network::Cnn(n) => Network::Cnn(n.cast()),
                Network::BiLstm(n) => Network::BiLstm(n.cast()),
                Network::Bert(n) => Network::Bert(n.cast()),
            },
            tokenizer: self.tokenizer.clone(),
        }
    }
}

fn softmax6(p: &mut [f64; NUM_CLASSES]) {
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in p.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    p.iter_mut().for_each(|v| *v /= sum);
}

fn word_table<T: Real>(
    config: &ArchitectureConfig,
    embeddings: Option<&EmbeddingMatrix>,
    rng: &mut impl rand::Rng,
) -> Result<Parameter<T>> {
    let (v, d) = (config.vocab_size, config.embed_dim);
    let table = match (config.scenario, embeddings) {
        (EmbeddingScenario::Random, _) => crate::embed::init_random(v, d, rng)?.matrix,
        (_, Some(m)) => {
            if m.matrix.shape() != [v, d] {
                return Err(Error::Config(format!(
                    "embedding matrix {:?} does not match config [{v}, {d}]",
                    m.matrix.shape()
                )));
            }
            m.matrix.clone()
        }
        (scenario, None) => {
            return Err(Error::Config(format!(
                "scenario {scenario:?} needs pre-trained embeddings"
            )));
        }
    };
    let p = Parameter::new("embedding.table", table.cast());
    Ok(if config.scenario == EmbeddingScenario::Frozen {
        p.with_role(crate::nn::ParamRole::Frozen)
    } else {
        p
    })
}

impl<T: Real> Module<T> for ClassifierModel<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        match &self.network {
            Network::Cnn(n) => n.params(),
            Network::BiLstm(n) => n.params(),
            Network::Bert(n) => n.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        match &mut self.network {
            Network::Cnn(n) => n.params_mut(),
            Network::BiLstm(n) => n.params_mut(),
            Network::Bert(n) => n.params_mut(),
        }
    }
}

/// Anything that maps titles to six-class probability rows: trained
/// models, or fixed stubs in tests.
pub trait TitleClassifier: Sync {
    fn classify_batch(&self, titles: &[&str]) -> Result<Vec<[f64; NUM_CLASSES]>>;

    /// Label (argmax, lower index on ties) and distribution for one title.
    fn predict(&self, title: &str) -> Result<(LeaningLabel, [f64; NUM_CLASSES])> {
        let dist = self
            .classify_batch(&[title])?
            .pop()
            .ok_or_else(|| Error::Empty("classifier returned no rows".into()))?;
        Ok((LeaningLabel::argmax(&dist), dist))
    }
}

impl<T: Real> TitleClassifier for ClassifierModel<T> {
    fn classify_batch(&self, titles: &[&str]) -> Result<Vec<[f64; NUM_CLASSES]>> {
        if titles.is_empty() {
            return Ok(Vec::new());
        }
        self.probabilities(&TokenBatch::encode(&self.tokenizer, titles)?)
    }
}
