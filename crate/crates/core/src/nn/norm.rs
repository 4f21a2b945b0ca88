use std::sync::Once;

use log::warn;

use super::{Mode, Module, ParamRole, Parameter, Real, Tensor};
use crate::{Error, Result};

pub const BATCHNORM_EPS: f64 = 1e-3;
pub const BATCHNORM_MOMENTUM: f64 = 0.99;
pub const LAYERNORM_EPS: f64 = 1e-12;

static UNTRAINED_BN_WARNING: Once = Once::new();

/// Batch normalization over every axis but the last (channels).
#[derive(Debug, Clone)]
pub struct BatchNorm1d<T: Real = f32> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Parameter<T>,
    pub running_var: Parameter<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T: Real> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    batch_mean: Vec<T>,
    batch_var: Vec<T>,
    mode: Mode,
}

impl<T: Real> BatchNorm1d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm1d {
            gamma: Parameter::constant(format!("{name}.gamma"), &[channels], 1.0),
            beta: Parameter::constant(format!("{name}.beta"), &[channels], 0.0),
            running_mean: Parameter::constant(format!("{name}.running_mean"), &[channels], 0.0)
                .with_role(ParamRole::Buffer),
            running_var: Parameter::constant(format!("{name}.running_var"), &[channels], 1.0)
                .with_role(ParamRole::Buffer),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    /// Train mode normalizes with batch statistics; eval mode with the
    /// running statistics. Running statistics are only changed by
    /// [`commit`](Self::commit).
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let c = self.channels();
        if x.last_dim() != c {
            return Err(Error::Shape(format!(
                "batchnorm expects {c} channels, got {:?}",
                x.shape()
            )));
        }
        let n = x.rows();
        let eps = T::lit(BATCHNORM_EPS);
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::Shape(format!(
                        "batchnorm training needs >= 2 positions, got {n}"
                    )));
                }
                let nt = T::lit(n as f64);
                let mut mean = vec![T::zero(); c];
                for row in x.data().chunks_exact(c) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= nt);
                let mut var = vec![T::zero(); c];
                for row in x.data().chunks_exact(c) {
                    for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= nt);
                (mean, var)
            }
            Mode::Eval => {
                let untouched = self.running_mean.value.data().iter().all(|v| *v == T::zero())
                    && self.running_var.value.data().iter().all(|v| *v == T::one());
                if untouched {
                    UNTRAINED_BN_WARNING.call_once(|| {
                        warn!("batch norm evaluated before any training step; using initial statistics");
                    });
                }
                (
                    self.running_mean.value.data().to_vec(),
                    self.running_var.value.data().to_vec(),
                )
            }
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = x.clone();
        let mut y = x.clone();
        for (hrow, yrow) in xhat
            .data_mut()
            .chunks_exact_mut(c)
            .zip(y.data_mut().chunks_exact_mut(c))
        {
            for j in 0..c {
                let h = (hrow[j] - mean[j]) * inv_std[j];
                hrow[j] = h;
                yrow[j] = self.gamma.value.data()[j] * h + self.beta.value.data()[j];
            }
        }
        Ok((
            y,
            BatchNormCache {
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                mode,
            },
        ))
    }

    /// Fold a train-mode batch's statistics into the running averages.
    pub fn commit(&mut self, cache: &BatchNormCache<T>) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = T::lit(BATCHNORM_MOMENTUM);
        let one_m = T::one() - m;
        for (r, &b) in self.running_mean.value.data_mut().iter_mut().zip(&cache.batch_mean) {
            *r = m * *r + one_m * b;
        }
        for (r, &b) in self.running_var.value.data_mut().iter_mut().zip(&cache.batch_var) {
            *r = m * *r + one_m * b;
        }
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let c = self.channels();
        let n = cache.xhat.rows();
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for (hrow, grow) in cache.xhat.data().chunks_exact(c).zip(dy.data().chunks_exact(c)) {
            for j in 0..c {
                dgamma[j] += grow[j] * hrow[j];
                dbeta[j] += grow[j];
            }
        }
        if self.gamma.trainable() {
            for (g, d) in self.gamma.grad.data_mut().iter_mut().zip(&dgamma) {
                *g += *d;
            }
        }
        if self.beta.trainable() {
            for (g, d) in self.beta.grad.data_mut().iter_mut().zip(&dbeta) {
                *g += *d;
            }
        }
        let gamma = self.gamma.value.data();
        let mut dx = Tensor::zeros_like(&cache.xhat);
        match cache.mode {
            Mode::Eval => {
                for (drow, grow) in dx.data_mut().chunks_exact_mut(c).zip(dy.data().chunks_exact(c)) {
                    for j in 0..c {
                        drow[j] = grow[j] * gamma[j] * cache.inv_std[j];
                    }
                }
            }
            Mode::Train => {
                // dx = inv_std/N · (N·dxhat − Σdxhat − xhat·Σ(dxhat·xhat)), dxhat = dy·γ
                let nt = T::lit(n as f64);
                for ((drow, grow), hrow) in dx
                    .data_mut()
                    .chunks_exact_mut(c)
                    .zip(dy.data().chunks_exact(c))
                    .zip(cache.xhat.data().chunks_exact(c))
                {
                    for j in 0..c {
                        let sum_dxhat = dbeta[j] * gamma[j];
                        let sum_dxhat_xhat = dgamma[j] * gamma[j];
                        let dxhat = grow[j] * gamma[j];
                        drow[j] = cache.inv_std[j] / nt * (nt * dxhat - sum_dxhat - hrow[j] * sum_dxhat_xhat);
                    }
                }
            }
        }
        dx
    }

    pub fn cast<U: Real>(&self) -> BatchNorm1d<U> {
        BatchNorm1d {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
        }
    }
}

impl<T: Real> Module<T> for BatchNorm1d<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }
}

/// Layer normalization over the last axis.
#[derive(Debug, Clone)]
pub struct LayerNorm<T: Real = f32> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<T: Real> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: Parameter::constant(format!("{name}.gamma"), &[dim], 1.0),
            beta: Parameter::constant(format!("{name}.beta"), &[dim], 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, LayerNormCache<T>)> {
        let d = self.dim();
        if x.last_dim() != d || d == 0 {
            return Err(Error::Shape(format!(
                "layer norm expects last axis {d}, got {:?}",
                x.shape()
            )));
        }
        let eps = T::lit(LAYERNORM_EPS);
        let dt = T::lit(d as f64);
        let mut xhat = x.clone();
        let mut y = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows());
        for (hrow, yrow) in xhat
            .data_mut()
            .chunks_exact_mut(d)
            .zip(y.data_mut().chunks_exact_mut(d))
        {
            let mean = hrow.iter().copied().sum::<T>() / dt;
            let var = hrow.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dt;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..d {
                let h = (hrow[j] - mean) * is;
                hrow[j] = h;
                yrow[j] = self.gamma.value.data()[j] * h + self.beta.value.data()[j];
            }
        }
        Ok((y, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&mut self, cache: &LayerNormCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let d = self.dim();
        let dt = T::lit(d as f64);
        let gamma = self.gamma.value.data().to_vec();
        let mut dx = Tensor::zeros_like(&cache.xhat);
        for (((drow, grow), hrow), &is) in dx
            .data_mut()
            .chunks_exact_mut(d)
            .zip(dy.data().chunks_exact(d))
            .zip(cache.xhat.data().chunks_exact(d))
            .zip(&cache.inv_std)
        {
            let mut sum = T::zero();
            let mut sum_h = T::zero();
            for j in 0..d {
                let dh = grow[j] * gamma[j];
                sum += dh;
                sum_h += dh * hrow[j];
            }
            for j in 0..d {
                let dh = grow[j] * gamma[j];
                drow[j] = is / dt * (dt * dh - sum - hrow[j] * sum_h);
            }
            if self.gamma.trainable() {
                for j in 0..d {
                    self.gamma.grad.data_mut()[j] += grow[j] * hrow[j];
                }
            }
            if self.beta.trainable() {
                for j in 0..d {
                    self.beta.grad.data_mut()[j] += grow[j];
                }
            }
        }
        dx
    }

    pub fn cast<U: Real>(&self) -> LayerNorm<U> {
        LayerNorm {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
        }
    }
}

impl<T: Real> Module<T> for LayerNorm<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}
