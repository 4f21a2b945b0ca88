use rand::Rng;

use super::{ArchitectureConfig, TokenBatch, OUTPUT_INIT_SCALE};
use crate::nn::{self, Dense, Embedding, Module, Parameter, Real, Tensor};
use crate::{Result, NUM_CLASSES};

/// Embedding → BiLSTM (sequence) → BiLSTM (final state) → Dense.
#[derive(Debug, Clone)]
pub struct BiLstmNet<T: Real> {
    pub embedding: Embedding<T>,
    pub first: nn::BiLstm<T>,
    pub second: nn::BiLstm<T>,
    pub output: Dense<T>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache<T: Real> {
    ids: Vec<u32>,
    first: nn::BiLstmCache<T>,
    second: nn::BiLstmCache<T>,
    state: Tensor<T>,
}

impl<T: Real> BiLstmNet<T> {
    pub(super) fn new(c: &ArchitectureConfig, table: Parameter<T>, rng: &mut impl Rng) -> Self {
        let u = c.lstm_units;
        BiLstmNet {
            embedding: Embedding { table },
            first: nn::BiLstm::new("bilstm1", c.embed_dim, u, true, rng),
            second: nn::BiLstm::new("bilstm2", 2 * u, u, false, rng),
            output: Dense::new("output", 2 * u, NUM_CLASSES, rng).scale_weights(OUTPUT_INIT_SCALE),
        }
    }

    pub(super) fn forward(&self, b: &TokenBatch) -> Result<(Tensor<T>, BiLstmCache<T>)> {
        let e = self.embedding.forward(&b.ids, b.batch, b.len)?;
        let (seq, first) = self.first.forward(&e)?;
        let (state, second) = self.second.forward(&seq)?;
        let logits = self.output.forward(&state)?;
        Ok((
            logits,
            BiLstmCache {
                ids: b.ids.clone(),
                first,
                second,
                state,
            },
        ))
    }

    pub(super) fn backward(&mut self, c: &BiLstmCache<T>, dlogits: &Tensor<T>) {
        let d = self.output.backward(&c.state, dlogits);
        let d = self.second.backward(&c.second, &d);
        let d = self.first.backward(&c.first, &d);
        self.embedding.backward(&c.ids, &d);
    }

    pub(super) fn cast<U: Real>(&self) -> BiLstmNet<U> {
        BiLstmNet {
            embedding: self.embedding.cast(),
            first: self.first.cast(),
            second: self.second.cast(),
            output: self.output.cast(),
        }
    }
}

impl<T: Real> Module<T> for BiLstmNet<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.embedding.params();
        v.extend(self.first.params());
        v.extend(self.second.params());
        v.extend(self.output.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.embedding.params_mut();
        v.extend(self.first.params_mut());
        v.extend(self.second.params_mut());
        v.extend(self.output.params_mut());
        v
    }
}
