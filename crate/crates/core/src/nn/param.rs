use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{Real, Tensor};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Updated by the optimizer.
    Trainable,
    /// Learnable in principle but held fixed (frozen embeddings).
    Frozen,
    /// Non-differentiable state such as batch-norm running statistics.
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T: Real = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub role: ParamRole,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros_like(&value);
        Parameter {
            name: name.into(),
            value,
            grad,
            role: ParamRole::Trainable,
        }
    }

    pub fn with_role(mut self, role: ParamRole) -> Self {
        self.role = role;
        self
    }

    pub fn trainable(&self) -> bool {
        self.role == ParamRole::Trainable
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Real>(&self) -> Parameter<U> {
        Parameter {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
            role: self.role,
        }
    }

    /// Glorot/Xavier uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(name: impl Into<String>, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
        Parameter::new(name, Tensor::from_parts(shape.to_vec(), data))
    }

    pub fn normal(name: impl Into<String>, shape: &[usize], std_dev: f64, rng: &mut impl Rng) -> Self {
        let dist = Normal::new(0.0, std_dev).expect("valid std dev");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
        Parameter::new(name, Tensor::from_parts(shape.to_vec(), data))
    }

    pub fn constant(name: impl Into<String>, shape: &[usize], value: f64) -> Self {
        Parameter::new(name, Tensor::full(shape, T::lit(value)))
    }
}

/// Anything that owns parameters. Parameters are listed in a fixed order,
/// which checkpoints and the optimizer rely on.
pub trait Module<T: Real> {
    fn params(&self) -> Vec<&Parameter<T>>;
    fn params_mut(&mut self) -> Vec<&mut Parameter<T>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Number of trainable scalars.
    fn trainable_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|p| p.trainable())
            .map(|p| p.value.len())
            .sum()
    }
}

/// Seed plus a counter; each call to [`stream`](Self::stream) hands out
/// an independent generator, and equal `(seed, counter)` reproduce it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub counter: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, counter: 0 }
    }

    pub fn stream(&mut self) -> ChaCha8Rng {
        let s = seed::derive_indexed(self.seed, "rng-state", self.counter);
        self.counter += 1;
        seed::rng(s)
    }
}
