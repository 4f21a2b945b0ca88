use rand::Rng;

use super::ops::{col_sum_acc, matmul_acc, matmul_nt, matmul_tn_acc};
use super::{Module, Parameter, Real, Tensor};
use crate::{Error, Result};

/// Affine map over the last axis: `y = x·W + b`, `W: [in, out]`.
#[derive(Debug, Clone)]
pub struct Dense<T: Real = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Dense {
            weight: Parameter::glorot(format!("{name}.weight"), &[inputs, outputs], inputs, outputs, rng),
            bias: Parameter::constant(format!("{name}.bias"), &[outputs], 0.0),
        }
    }

    /// Multiply the initial weights by `factor`.
    pub fn scale_weights(mut self, factor: f64) -> Self {
        let f = T::lit(factor);
        for w in self.weight.value.data_mut() {
            *w = *w * f;
        }
        self
    }

    pub fn from_params(weight: Parameter<T>, bias: Parameter<T>) -> Result<Self> {
        if weight.value.shape().len() != 2 || bias.value.shape() != [weight.value.shape()[1]] {
            return Err(Error::Shape(format!(
                "dense weight {:?} incompatible with bias {:?}",
                weight.value.shape(),
                bias.value.shape()
            )));
        }
        Ok(Dense { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (k, n) = (self.inputs(), self.outputs());
        if x.last_dim() != k || x.shape().is_empty() {
            return Err(Error::Shape(format!(
                "dense expects last axis {k}, got {:?}",
                x.shape()
            )));
        }
        let m = x.rows();
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(self.bias.value.data());
        }
        matmul_acc(&mut out, x.data(), self.weight.value.data(), m, k, n);
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        Ok(Tensor::from_parts(shape, out))
    }

    /// Accumulates `dW = xᵀ·dy`, `db = Σ dy` and returns `dx = dy·Wᵀ`.
    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
        let (k, n) = (self.inputs(), self.outputs());
        let m = x.rows();
        if self.weight.trainable() {
            matmul_tn_acc(self.weight.grad.data_mut(), x.data(), dy.data(), m, k, n);
        }
        if self.bias.trainable() {
            col_sum_acc(self.bias.grad.data_mut(), dy.data(), n);
        }
        let dx = matmul_nt(dy.data(), self.weight.value.data(), m, n, k);
        Tensor::from_parts(x.shape().to_vec(), dx)
    }
}

impl<T: Real> Module<T> for Dense<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl<T: Real> Dense<T> {
    pub fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
        }
    }
}
