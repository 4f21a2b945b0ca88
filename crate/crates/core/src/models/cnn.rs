use rand::Rng;

use super::{ArchitectureConfig, TokenBatch, OUTPUT_INIT_SCALE};
use crate::nn::{
    dropout, dropout_backward, global_maxpool1d, maxpool1d, pool_backward, relu, relu_backward, BatchNorm1d,
    BatchNormCache, Conv1d, Conv1dCache, Dense, Embedding, Mode, Module, Parameter, PoolCache, Real, RngState, Tensor,
};
use crate::{Result, NUM_CLASSES};

/// Embedding → Conv1D → ReLU → BatchNorm → MaxPool → GlobalMaxPool →
/// Dense+ReLU → Dropout → Dense.
#[derive(Debug, Clone)]
pub struct CnnNet<T: Real> {
    pub embedding: Embedding<T>,
    pub conv: Conv1d<T>,
    pub norm: BatchNorm1d<T>,
    pub hidden: Dense<T>,
    pub output: Dense<T>,
    pub pool_size: usize,
    pub dropout: f64,
}

#[derive(Debug, Clone)]
pub struct CnnCache<T: Real> {
    ids: Vec<u32>,
    conv: Conv1dCache<T>,
    conv_out: Tensor<T>,
    norm: BatchNormCache<T>,
    pool: PoolCache,
    global: PoolCache,
    pooled: Tensor<T>,
    hidden_pre: Tensor<T>,
    mask: Option<Vec<T>>,
    dropped: Tensor<T>,
}

impl<T: Real> CnnNet<T> {
    pub(super) fn new(c: &ArchitectureConfig, table: Parameter<T>, rng: &mut impl Rng) -> Self {
        CnnNet {
            embedding: Embedding { table },
            conv: Conv1d::new("conv", c.conv_width, c.embed_dim, c.conv_filters, rng),
            norm: BatchNorm1d::new("batchnorm", c.conv_filters),
            hidden: Dense::new("hidden", c.conv_filters, c.dense_units, rng),
            output: Dense::new("output", c.dense_units, NUM_CLASSES, rng).scale_weights(OUTPUT_INIT_SCALE),
            pool_size: c.pool_size,
            dropout: c.dropout,
        }
    }

    pub(super) fn forward(&self, b: &TokenBatch, mode: Mode, rng: &mut RngState) -> Result<(Tensor<T>, CnnCache<T>)> {
        let e = self.embedding.forward(&b.ids, b.batch, b.len)?;
        let (conv_out, conv) = self.conv.forward(&e)?;
        let r = relu(&conv_out);
        let (n, norm) = self.norm.forward(&r, mode)?;
        let (p, pool) = maxpool1d(&n, self.pool_size)?;
        let (pooled, global) = global_maxpool1d(&p)?;
        let hidden_pre = self.hidden.forward(&pooled)?;
        let (dropped, mask) = dropout(&relu(&hidden_pre), self.dropout, mode, rng)?;
        let logits = self.output.forward(&dropped)?;
        Ok((
            logits,
            CnnCache {
                ids: b.ids.clone(),
                conv,
                conv_out,
                norm,
                pool,
                global,
                pooled,
                hidden_pre,
                mask,
                dropped,
            },
        ))
    }

    pub(super) fn backward(&mut self, c: &CnnCache<T>, dlogits: &Tensor<T>) {
        let d = self.output.backward(&c.dropped, dlogits);
        let d = dropout_backward(c.mask.as_deref(), &d);
        let d = relu_backward(&c.hidden_pre, &d);
        let d = self.hidden.backward(&c.pooled, &d);
        let d = pool_backward(&c.global, &d);
        let d = pool_backward(&c.pool, &d);
        let d = self.norm.backward(&c.norm, &d);
        let d = relu_backward(&c.conv_out, &d);
        let d = self.conv.backward(&c.conv, &d);
        self.embedding.backward(&c.ids, &d);
    }

    pub(super) fn commit(&mut self, c: &CnnCache<T>) {
        self.norm.commit(&c.norm);
    }

    pub(super) fn cast<U: Real>(&self) -> CnnNet<U> {
        CnnNet {
            embedding: self.embedding.cast(),
            conv: self.conv.cast(),
            norm: self.norm.cast(),
            hidden: self.hidden.cast(),
            output: self.output.cast(),
            pool_size: self.pool_size,
            dropout: self.dropout,
        }
    }
}

impl<T: Real> Module<T> for CnnNet<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.embedding.params();
        v.extend(self.conv.params());
        v.extend(self.norm.params());
        v.extend(self.hidden.params());
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.embedding.params_mut();
        v.extend(self.conv.params_mut());
        v.extend(self.norm.params_mut());
        v.extend(self.hidden.params_mut());
        v.extend(self.output.params_mut());
        v
    }
}
