use rand::Rng;

use super::ops::{col_sum_acc, matmul_acc, matmul_nt, matmul_tn_acc};
use super::{Module, Parameter, Real, Tensor};
use crate::{Error, Result};

/// 1-D convolution over `[batch, len, in_ch]`, valid padding, stride 1.
/// Kernel layout is `[width, in_ch, out_ch]`.
#[derive(Debug, Clone)]
pub struct Conv1d<T: Real = f32> {
    pub kernel: Parameter<T>,
    pub bias: Parameter<T>,
}

#[derive(Debug, Clone)]
pub struct Conv1dCache<T: Real> {
    x: Tensor<T>,
}

impl<T: Real> Conv1d<T> {
    pub fn new(name: &str, width: usize, in_ch: usize, out_ch: usize, rng: &mut impl Rng) -> Self {
        Conv1d {
            kernel: Parameter::glorot(
                format!("{name}.kernel"),
                &[width, in_ch, out_ch],
                width * in_ch,
                width * out_ch,
                rng,
            ),
            bias: Parameter::constant(format!("{name}.bias"), &[out_ch], 0.0),
        }
    }

    pub fn from_params(kernel: Parameter<T>, bias: Parameter<T>) -> Result<Self> {
        let ks = kernel.value.shape();
        if ks.len() != 3 || bias.value.shape() != [ks[2]] {
            return Err(Error::Shape(format!(
                "conv kernel {ks:?} with bias {:?}",
                bias.value.shape()
            )));
        }
        Ok(Conv1d { kernel, bias })
    }

    pub fn width(&self) -> usize {
        self.kernel.value.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.value.shape()[2]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Conv1dCache<T>)> {
        x.expect_rank(3, "conv1d input")?;
        let (b, len, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (w, cout) = (self.width(), self.out_channels());
        if cin != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv1d expects {} input channels, got {cin}",
                self.in_channels()
            )));
        }
        if len < w {
            return Err(Error::Shape(format!(
                "conv1d length {len} shorter than kernel width {w}"
            )));
        }
        let out_len = len - w + 1;
        let window = w * cin;
        let mut out = Vec::with_capacity(b * out_len * cout);
        for bi in 0..b {
            for _ in 0..out_len {
                out.extend_from_slice(self.bias.value.data());
            }
            let xb = &x.data()[bi * len * cin..(bi + 1) * len * cin];
            let ob = &mut out[bi * out_len * cout..(bi + 1) * out_len * cout];
            for t in 0..out_len {
                // positions t..t+w are contiguous in [len, cin] layout
                let xw = &xb[t * cin..t * cin + window];
                matmul_acc(
                    &mut ob[t * cout..(t + 1) * cout],
                    xw,
                    self.kernel.value.data(),
                    1,
                    window,
                    cout,
                );
            }
        }
        let y = Tensor::from_parts(vec![b, out_len, cout], out);
        Ok((y, Conv1dCache { x: x.clone() }))
    }

    pub fn backward(&mut self, cache: &Conv1dCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let x = &cache.x;
        let (b, len, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (w, cout) = (self.width(), self.out_channels());
        let out_len = len - w + 1;
        let window = w * cin;
        let mut dx = Tensor::zeros_like(x);
        for bi in 0..b {
            let xb = &x.data()[bi * len * cin..(bi + 1) * len * cin];
            let dyb = &dy.data()[bi * out_len * cout..(bi + 1) * out_len * cout];
            let dxb = &mut dx.data_mut()[bi * len * cin..(bi + 1) * len * cin];
            for t in 0..out_len {
                let g = &dyb[t * cout..(t + 1) * cout];
                if self.kernel.trainable() {
                    matmul_tn_acc(
                        self.kernel.grad.data_mut(),
                        &xb[t * cin..t * cin + window],
                        g,
                        1,
                        window,
                        cout,
                    );
                }
                let dxw = matmul_nt(g, self.kernel.value.data(), 1, cout, window);
                for (d, v) in dxb[t * cin..t * cin + window].iter_mut().zip(dxw) {
                    *d += v;
                }
            }
        }
        if self.bias.trainable() {
            col_sum_acc(self.bias.grad.data_mut(), dy.data(), cout);
        }
        dx
    }

    pub fn cast<U: Real>(&self) -> Conv1d<U> {
        Conv1d {
            kernel: self.kernel.cast(),
            bias: self.bias.cast(),
        }
    }
}

impl<T: Real> Module<T> for Conv1d<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        vec![&self.kernel, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        vec![&mut self.kernel, &mut self.bias]
    }
}
