use rand::Rng;

use super::{ArchitectureConfig, TokenBatch, OUTPUT_INIT_SCALE};
use crate::embed::INIT_STD;
use crate::nn::{
    dropout, dropout_backward, gelu, gelu_backward, relu, relu_backward, AttentionCache, Dense, Embedding, LayerNorm,
    LayerNormCache, Mode, Module, MultiHeadAttention, Parameter, Real, RngState, Tensor,
};
use crate::{Result, NUM_CLASSES};

/// One post-norm transformer block.
#[derive(Debug, Clone)]
pub struct EncoderLayer<T: Real> {
    pub attention: MultiHeadAttention<T>,
    pub attention_norm: LayerNorm<T>,
    pub ffn_in: Dense<T>,
    pub ffn_out: Dense<T>,
    pub output_norm: LayerNorm<T>,
}

#[derive(Debug, Clone)]
struct LayerCache<T: Real> {
    attention: AttentionCache<T>,
    attention_norm: LayerNormCache<T>,
    normed: Tensor<T>,
    ffn_pre: Tensor<T>,
    ffn_act: Tensor<T>,
    output_norm: LayerNormCache<T>,
}

impl<T: Real> EncoderLayer<T> {
    fn new(name: &str, c: &ArchitectureConfig, rng: &mut impl Rng) -> Result<Self> {
        let h = c.embed_dim;
        Ok(EncoderLayer {
            attention: MultiHeadAttention::new(&format!("{name}.attention"), h, c.heads, rng)?,
            attention_norm: LayerNorm::new(&format!("{name}.attention_norm"), h),
            ffn_in: Dense::new(&format!("{name}.ffn_in"), h, c.ffn_dim, rng),
            ffn_out: Dense::new(&format!("{name}.ffn_out"), c.ffn_dim, h, rng),
            output_norm: LayerNorm::new(&format!("{name}.output_norm"), h),
        })
    }

    fn forward(&self, x: &Tensor<T>, mask: &[u8]) -> Result<(Tensor<T>, LayerCache<T>)> {
        let (a, attention) = self.attention.forward(x, Some(mask))?;
        let mut s1 = a;
        s1.add_assign(x);
        let (normed, attention_norm) = self.attention_norm.forward(&s1)?;
        let ffn_pre = self.ffn_in.forward(&normed)?;
        let ffn_act = gelu(&ffn_pre);
        let mut s2 = self.ffn_out.forward(&ffn_act)?;
        s2.add_assign(&normed);
        let (y, output_norm) = self.output_norm.forward(&s2)?;
        Ok((
            y,
            LayerCache {
                attention,
                attention_norm,
                normed,
                ffn_pre,
                ffn_act,
                output_norm,
            },
        ))
    }

    fn backward(&mut self, c: &LayerCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let ds2 = self.output_norm.backward(&c.output_norm, dy);
        let d = self.ffn_out.backward(&c.ffn_act, &ds2);
        let d = gelu_backward(&c.ffn_pre, &d);
        let mut dnormed = self.ffn_in.backward(&c.normed, &d);
        dnormed.add_assign(&ds2);
        let ds1 = self.attention_norm.backward(&c.attention_norm, &dnormed);
        let mut dx = self.attention.backward(&c.attention, &ds1);
        dx.add_assign(&ds1);
        dx
    }

    fn cast<U: Real>(&self) -> EncoderLayer<U> {
        EncoderLayer {
            attention: self.attention.cast(),
            attention_norm: self.attention_norm.cast(),
            ffn_in: self.ffn_in.cast(),
            ffn_out: self.ffn_out.cast(),
            output_norm: self.output_norm.cast(),
        }
    }

    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.attention.params();
        v.extend(self.attention_norm.params());
        v.extend(self.ffn_in.params());
        v.extend(self.ffn_out.params());
        v.extend(self.output_norm.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.attention.params_mut();
        v.extend(self.attention_norm.params_mut());
        v.extend(self.ffn_in.params_mut());
        v.extend(self.ffn_out.params_mut());
        v.extend(self.output_norm.params_mut());
        v
    }
}

/// Token + position + segment embeddings, LayerNorm, `L` encoder blocks,
/// then a dropout/dense head on the `[CLS]` position.
#[derive(Debug, Clone)]
pub struct BertNet<T: Real> {
    pub tokens: Embedding<T>,
    pub positions: Parameter<T>,
    pub segments: Parameter<T>,
    pub embedding_norm: LayerNorm<T>,
    pub layers: Vec<EncoderLayer<T>>,
    /// Hidden head layers (ReLU) followed by the output layer.
    pub head: Vec<Dense<T>>,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct BertCache<T: Real> {
    ids: Vec<u32>,
    batch: usize,
    len: usize,
    embedding_norm: LayerNormCache<T>,
    layers: Vec<LayerCache<T>>,
    /// Per head layer: dropout mask, dense input, dense output.
    head: Vec<(Option<Vec<T>>, Tensor<T>, Tensor<T>)>,
}

impl<T: Real> BertCache<T> {
    /// Attention weights of every encoder layer, each laid out
    /// `[batch, heads, query, key]`.
    pub fn attention_probabilities(&self) -> Vec<&[T]> {
        self.layers.iter().map(|l| l.attention.probabilities()).collect()
    }
}

impl<T: Real> BertNet<T> {
    pub(super) fn new(c: &ArchitectureConfig, rng: &mut impl Rng) -> Result<Self> {
        let h = c.embed_dim;
        let layers = (0..c.layers)
            .map(|i| EncoderLayer::new(&format!("encoder{i}"), c, rng))
            .collect::<Result<Vec<_>>>()?;
        let mut widths = vec![h];
        widths.extend(&c.head_units);
        widths.push(NUM_CLASSES);
        let head = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let d = Dense::new(&format!("head{i}"), w[0], w[1], rng);
                if w[1] == NUM_CLASSES && i + 2 == widths.len() {
                    d.scale_weights(OUTPUT_INIT_SCALE)
                } else {
                    d
                }
            })
            .collect();
        Ok(BertNet {
            tokens: Embedding {
                table: Parameter::normal("embedding.tokens", &[c.vocab_size, h], INIT_STD, rng),
            },
            positions: Parameter::normal("embedding.positions", &[c.max_len, h], INIT_STD, rng),
            segments: Parameter::normal("embedding.segments", &[2, h], INIT_STD, rng),
            embedding_norm: LayerNorm::new("embedding.norm", h),
            layers,
            head,
            dropout: c.dropout,
        })
    }

    fn hidden(&self) -> usize {
        self.segments.value.shape()[1]
    }

    pub(super) fn forward(&self, b: &TokenBatch, mode: Mode, rng: &mut RngState) -> Result<(Tensor<T>, BertCache<T>)> {
        let h = self.hidden();
        let mut x = self.tokens.forward(&b.ids, b.batch, b.len)?;
        let pos = self.positions.value.data();
        let seg = &self.segments.value.data()[..h];
        for row in x.data_mut().chunks_exact_mut(b.len * h) {
            for (t, tok) in row.chunks_exact_mut(h).enumerate() {
                for j in 0..h {
                    tok[j] += pos[t * h + j] + seg[j];
                }
            }
        }
        let (mut x, embedding_norm) = self.embedding_norm.forward(&x)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, c) = layer.forward(&x, &b.mask)?;
            layers.push(c);
            x = y;
        }
        let mut cls = Vec::with_capacity(b.batch * h);
        for row in x.data().chunks_exact(b.len * h) {
            cls.extend_from_slice(&row[..h]);
        }
        let mut a = Tensor::from_parts(vec![b.batch, h], cls);
        let mut head = Vec::with_capacity(self.head.len());
        for (i, dense) in self.head.iter().enumerate() {
            let (dropped, mask) = dropout(&a, self.dropout, mode, rng)?;
            let z = dense.forward(&dropped)?;
            a = if i + 1 < self.head.len() { relu(&z) } else { z.clone() };
            head.push((mask, dropped, z));
        }
        Ok((
            a,
            BertCache {
                ids: b.ids.clone(),
                batch: b.batch,
                len: b.len,
                embedding_norm,
                layers,
                head,
            },
        ))
    }

    pub(super) fn backward(&mut self, c: &BertCache<T>, dlogits: &Tensor<T>) {
        let h = self.hidden();
        let n = self.head.len();
        let mut d = dlogits.clone();
        for i in (0..n).rev() {
            let (mask, input, z) = &c.head[i];
            if i + 1 < n {
                d = relu_backward(z, &d);
            }
            d = self.head[i].backward(input, &d);
            d = dropout_backward(mask.as_deref(), &d);
        }
        let mut dx = Tensor::zeros(&[c.batch, c.len, h]);
        for (row, g) in dx.data_mut().chunks_exact_mut(c.len * h).zip(d.data().chunks_exact(h)) {
            row[..h].copy_from_slice(g);
        }
        for (layer, lc) in self.layers.iter_mut().zip(&c.layers).rev() {
            dx = layer.backward(lc, &dx);
        }
        let dx = self.embedding_norm.backward(&c.embedding_norm, &dx);
        self.tokens.backward(&c.ids, &dx);
        let pos_grad = self.positions.grad.data_mut();
        for row in dx.data().chunks_exact(c.len * h) {
            for (p, &g) in pos_grad.iter_mut().zip(row) {
                *p += g;
            }
        }
        let seg_grad = &mut self.segments.grad.data_mut()[..h];
        for tok in dx.data().chunks_exact(h) {
            for (s, &g) in seg_grad.iter_mut().zip(tok) {
                *s += g;
            }
        }
    }

    pub(super) fn cast<U: Real>(&self) -> BertNet<U> {
        BertNet {
            tokens: self.tokens.cast(),
            positions: self.positions.cast(),
            segments: self.segments.cast(),
            embedding_norm: self.embedding_norm.cast(),
            layers: self.layers.iter().map(EncoderLayer::cast).collect(),
            head: self.head.iter().map(Dense::cast).collect(),
            dropout: self.dropout,
        }
    }
}

impl<T: Real> Module<T> for BertNet<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.tokens.params();
        v.push(&self.positions);
        v.push(&self.segments);
        v.extend(self.embedding_norm.params());
        for l in &self.layers {
            v.extend(l.params());
        }
        for d in &self.head {
            v.extend(d.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.tokens.params_mut();
        v.push(&mut self.positions);
        v.push(&mut self.segments);
        v.extend(self.embedding_norm.params_mut());
        for l in &mut self.layers {
            v.extend(l.params_mut());
        }
        for d in &mut self.head {
            v.extend(d.params_mut());
        }
        v
    }
}
