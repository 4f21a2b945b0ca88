use super::{Module, Parameter, Real, Tensor};
use crate::{Error, Result};

/// Row lookup into `[vocab, dim]`. A frozen table never accumulates
/// gradient.
#[derive(Debug, Clone)]
pub struct Embedding<T: Real = f32> {
    pub table: Parameter<T>,
}

impl<T: Real> Embedding<T> {
    pub fn new(table: Parameter<T>) -> Result<Self> {
        table.value.expect_rank(2, "embedding table")?;
        Ok(Embedding { table })
    }

    pub fn vocab(&self) -> usize {
        self.table.value.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.value.shape()[1]
    }

    /// `ids` is `[batch, len]` flattened; output is `[batch, len, dim]`.
    pub fn forward(&self, ids: &[u32], batch: usize, len: usize) -> Result<Tensor<T>> {
        if ids.len() != batch * len {
            return Err(Error::Shape(format!("{} ids for [{batch}, {len}]", ids.len())));
        }
        let (v, d) = (self.vocab(), self.dim());
        let table = self.table.value.data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            if id >= v {
                return Err(Error::TokenOutOfRange { id, size: v });
            }
            out.extend_from_slice(&table[id * d..(id + 1) * d]);
        }
        Ok(Tensor::from_parts(vec![batch, len, d], out))
    }

    /// Scatter-add `dy` rows into the table gradient (trainable tables only).
    pub fn backward(&mut self, ids: &[u32], dy: &Tensor<T>) {
        if !self.table.trainable() {
            return;
        }
        let d = self.dim();
        let grad = self.table.grad.data_mut();
        for (&id, g) in ids.iter().zip(dy.data().chunks_exact(d)) {
            let row = &mut grad[id as usize * d..(id as usize + 1) * d];
            for (r, &v) in row.iter_mut().zip(g) {
                *r += v;
            }
        }
    }

    pub fn cast<U: Real>(&self) -> Embedding<U> {
        Embedding {
            table: self.table.cast(),
        }
    }
}

impl<T: Real> Module<T> for Embedding<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.table]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.table]
    }
}
