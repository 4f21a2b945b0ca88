use rand::Rng;

use super::activation::softmax_row;
use super::{Dense, Module, Parameter, Real, Tensor};
use crate::{Error, Result};

/// Score given to masked key positions before the softmax.
const MASKED_SCORE: f64 = -1e9;

/// Multi-head self-attention with separate query/key/value/output
/// projections of width `H`.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention<T: Real = f32> {
    pub query: Dense<T>,
    pub key: Dense<T>,
    pub value: Dense<T>,
    pub output: Dense<T>,
    heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T: Real> {
    x: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    context: Tensor<T>,
    /// `[batch, heads, len, len]`, rows indexed by query position.
    probs: Vec<T>,
}

impl<T: Real> AttentionCache<T> {
    /// Attention weights laid out `[batch, heads, query, key]`.
    pub fn probabilities(&self) -> &[T] {
        &self.probs
    }
}

impl<T: Real> MultiHeadAttention<T> {
    pub fn new(name: &str, hidden: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        if heads == 0 || hidden % heads != 0 {
            return Err(Error::Config(format!(
                "hidden size {hidden} not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            query: Dense::new(&format!("{name}.query"), hidden, hidden, rng),
            key: Dense::new(&format!("{name}.key"), hidden, hidden, rng),
            value: Dense::new(&format!("{name}.value"), hidden, hidden, rng),
            output: Dense::new(&format!("{name}.output"), hidden, hidden, rng),
            heads,
        })
    }

    pub fn hidden(&self) -> usize {
        self.query.inputs()
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// `mask` holds one flag per `[batch, len]` position; 0 marks keys that
    /// must receive no attention.
    pub fn forward(&self, x: &Tensor<T>, mask: Option<&[u8]>) -> Result<(Tensor<T>, AttentionCache<T>)> {
        x.expect_rank(3, "attention input")?;
        let (batch, len, h) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if h != self.hidden() {
            return Err(Error::Shape(format!(
                "attention expects hidden {}, got {h}",
                self.hidden()
            )));
        }
        if let Some(m) = mask {
            if m.len() != batch * len {
                return Err(Error::Shape(format!(
                    "mask has {} entries for [{batch}, {len}]",
                    m.len()
                )));
            }
        }
        let q = self.query.forward(x)?;
        let k = self.key.forward(x)?;
        let v = self.value.forward(x)?;
        let a = self.heads;
        let d = h / a;
        let scale = T::lit(1.0 / (d as f64).sqrt());
        let masked = T::lit(MASKED_SCORE);
        let mut probs = vec![T::zero(); batch * a * len * len];
        let mut context = vec![T::zero(); batch * len * h];
        let (qd, kd, vd) = (q.data(), k.data(), v.data());
        for b in 0..batch {
            for head in 0..a {
                let off = head * d;
                for i in 0..len {
                    let row_at = ((b * a + head) * len + i) * len;
                    let row = &mut probs[row_at..row_at + len];
                    let qi = &qd[(b * len + i) * h + off..][..d];
                    for (j, s) in row.iter_mut().enumerate() {
                        if mask.is_some_and(|m| m[b * len + j] == 0) {
                            *s = masked;
                        } else {
                            let kj = &kd[(b * len + j) * h + off..][..d];
                            *s = qi.iter().zip(kj).map(|(&p, &r)| p * r).sum::<T>() * scale;
                        }
                    }
                    softmax_row(row);
                    let ctx = &mut context[(b * len + i) * h + off..][..d];
                    for (j, &p) in row.iter().enumerate() {
                        let vj = &vd[(b * len + j) * h + off..][..d];
                        for (c, &vv) in ctx.iter_mut().zip(vj) {
                            *c += p * vv;
                        }
                    }
                }
            }
        }
        let context = Tensor::from_parts(vec![batch, len, h], context);
        let y = self.output.forward(&context)?;
        Ok((
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                context,
                probs,
            },
        ))
    }

    pub fn backward(&mut self, cache: &AttentionCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let dctx = self.output.backward(&cache.context, dy);
        let (batch, len, h) = (cache.x.shape()[0], cache.x.shape()[1], cache.x.shape()[2]);
        let a = self.heads;
        let d = h / a;
        let scale = T::lit(1.0 / (d as f64).sqrt());
        let mut dq = vec![T::zero(); batch * len * h];
        let mut dk = vec![T::zero(); batch * len * h];
        let mut dv = vec![T::zero(); batch * len * h];
        let (qd, kd, vd, gd) = (cache.q.data(), cache.k.data(), cache.v.data(), dctx.data());
        let mut dp = vec![T::zero(); len];
        for b in 0..batch {
            for head in 0..a {
                let off = head * d;
                for i in 0..len {
                    let row_at = ((b * a + head) * len + i) * len;
                    let p = &cache.probs[row_at..row_at + len];
                    let gi = &gd[(b * len + i) * h + off..][..d];
                    for j in 0..len {
                        let vj = &vd[(b * len + j) * h + off..][..d];
                        dp[j] = gi.iter().zip(vj).map(|(&x, &y)| x * y).sum();
                        let dvj = &mut dv[(b * len + j) * h + off..][..d];
                        for (o, &g) in dvj.iter_mut().zip(gi) {
                            *o += p[j] * g;
                        }
                    }
                    let dot: T = p.iter().zip(&dp).map(|(&x, &y)| x * y).sum();
                    for j in 0..len {
                        // Masked keys have p = 0, so their score gradient vanishes.
                        let ds = p[j] * (dp[j] - dot) * scale;
                        if ds == T::zero() {
                            continue;
                        }
                        let kj = &kd[(b * len + j) * h + off..][..d];
                        let qi = &qd[(b * len + i) * h + off..][..d];
                        let dqi = &mut dq[(b * len + i) * h + off..][..d];
                        for (o, &kv) in dqi.iter_mut().zip(kj) {
                            *o += ds * kv;
                        }
                        let dkj = &mut dk[(b * len + j) * h + off..][..d];
                        for (o, &qv) in dkj.iter_mut().zip(qi) {
                            *o += ds * qv;
                        }
                    }
                }
            }
        }
        let shape = vec![batch, len, h];
        let mut dx = self.query.backward(&cache.x, &Tensor::from_parts(shape.clone(), dq));
        dx.add_assign(&self.key.backward(&cache.x, &Tensor::from_parts(shape.clone(), dk)));
        dx.add_assign(&self.value.backward(&cache.x, &Tensor::from_parts(shape, dv)));
        dx
    }

    pub fn cast<U: Real>(&self) -> MultiHeadAttention<U> {
        MultiHeadAttention {
            query: self.query.cast(),
            key: self.key.cast(),
            value: self.value.cast(),
            output: self.output.cast(),
            heads: self.heads,
        }
    }
}

impl<T: Real> Module<T> for MultiHeadAttention<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.query.params();
        v.extend(self.key.params());
        v.extend(self.value.params());
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.query.params_mut();
        v.extend(self.key.params_mut());
        v.extend(self.value.params_mut());
        v.extend(self.output.params_mut());
        v
    }
}
