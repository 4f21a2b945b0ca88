use rand::Rng;

use super::activation::sigmoid_scalar;
use super::ops::{col_sum_acc, matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::{Module, Parameter, Real, Tensor};
use crate::{Error, Result};

/// One LSTM direction. Gate blocks are laid out `[i, f, g, o]` along the
/// last axis of every parameter.
#[derive(Debug, Clone)]
pub struct LstmCell<T: Real = f32> {
    pub kernel: Parameter<T>,
    pub recurrent: Parameter<T>,
    pub bias: Parameter<T>,
}

/// Per-step activations of one direction, indexed by sequence position.
#[derive(Debug, Clone)]
struct DirectionCache<T> {
    gates: Vec<Vec<T>>,
    cells: Vec<Vec<T>>,
    hidden: Vec<Vec<T>>,
}

impl<T: Real> LstmCell<T> {
    pub fn new(name: &str, inputs: usize, units: usize, rng: &mut impl Rng) -> Self {
        let mut bias = Parameter::constant(format!("{name}.bias"), &[4 * units], 0.0);
        bias.value.data_mut()[units..2 * units].fill(T::one());
        LstmCell {
            kernel: Parameter::glorot(format!("{name}.kernel"), &[inputs, 4 * units], inputs, 4 * units, rng),
            recurrent: Parameter::glorot(format!("{name}.recurrent"), &[units, 4 * units], units, 4 * units, rng),
            bias,
        }
    }

    pub fn inputs(&self) -> usize {
        self.kernel.value.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.recurrent.value.shape()[0]
    }

    fn run(&self, steps: &[Vec<T>], batch: usize, reverse: bool) -> DirectionCache<T> {
        let (n_in, u) = (self.inputs(), self.units());
        let len = steps.len();
        let mut cache = DirectionCache {
            gates: vec![Vec::new(); len],
            cells: vec![Vec::new(); len],
            hidden: vec![Vec::new(); len],
        };
        let mut h = vec![T::zero(); batch * u];
        let mut c = vec![T::zero(); batch * u];
        for step in 0..len {
            let t = if reverse { len - 1 - step } else { step };
            let mut z = Vec::with_capacity(batch * 4 * u);
            for _ in 0..batch {
                z.extend_from_slice(self.bias.value.data());
            }
            matmul_acc(&mut z, &steps[t], self.kernel.value.data(), batch, n_in, 4 * u);
            matmul_acc(&mut z, &h, self.recurrent.value.data(), batch, u, 4 * u);
            for (b, zr) in z.chunks_exact_mut(4 * u).enumerate() {
                for j in 0..u {
                    let i = sigmoid_scalar(zr[j]);
                    let f = sigmoid_scalar(zr[u + j]);
                    let g = zr[2 * u + j].tanh();
                    let o = sigmoid_scalar(zr[3 * u + j]);
                    zr[j] = i;
                    zr[u + j] = f;
                    zr[2 * u + j] = g;
                    zr[3 * u + j] = o;
                    let cell = f * c[b * u + j] + i * g;
                    c[b * u + j] = cell;
                    h[b * u + j] = o * cell.tanh();
                }
            }
            cache.gates[t] = z;
            cache.cells[t] = c.clone();
            cache.hidden[t] = h.clone();
        }
        cache
    }

    /// Backpropagation through time. `dh[t]` is the upstream gradient for
    /// the hidden state at position `t`; returns per-position input
    /// gradients.
    fn backprop(
        &mut self,
        steps: &[Vec<T>],
        cache: &DirectionCache<T>,
        dh: &[Vec<T>],
        batch: usize,
        reverse: bool,
    ) -> Vec<Vec<T>> {
        let (n_in, u) = (self.inputs(), self.units());
        let len = steps.len();
        let zeros = vec![T::zero(); batch * u];
        let mut dx = vec![Vec::new(); len];
        let mut dh_next = vec![T::zero(); batch * u];
        let mut dc_next = vec![T::zero(); batch * u];
        let one = T::one();
        for step in (0..len).rev() {
            let t = if reverse { len - 1 - step } else { step };
            let prev = if step == 0 {
                None
            } else if reverse {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            let (h_prev, c_prev) = match prev {
                Some(p) => (&cache.hidden[p], &cache.cells[p]),
                None => (&zeros, &zeros),
            };
            let gates = &cache.gates[t];
            let cells = &cache.cells[t];
            let mut dz = vec![T::zero(); batch * 4 * u];
            for b in 0..batch {
                for j in 0..u {
                    let k = b * u + j;
                    let g4 = b * 4 * u;
                    let (i, f, g, o) = (
                        gates[g4 + j],
                        gates[g4 + u + j],
                        gates[g4 + 2 * u + j],
                        gates[g4 + 3 * u + j],
                    );
                    let tc = cells[k].tanh();
                    let dhk = dh[t][k] + dh_next[k];
                    let d_o = dhk * tc;
                    let dc = dc_next[k] + dhk * o * (one - tc * tc);
                    dz[g4 + j] = dc * g * i * (one - i);
                    dz[g4 + u + j] = dc * c_prev[k] * f * (one - f);
                    dz[g4 + 2 * u + j] = dc * i * (one - g * g);
                    dz[g4 + 3 * u + j] = d_o * o * (one - o);
                    dc_next[k] = dc * f;
                }
            }
            matmul_tn_acc(self.kernel.grad.data_mut(), &steps[t], &dz, batch, n_in, 4 * u);
            matmul_tn_acc(self.recurrent.grad.data_mut(), h_prev, &dz, batch, u, 4 * u);
            col_sum_acc(self.bias.grad.data_mut(), &dz, 4 * u);
            let mut dxt = vec![T::zero(); batch * n_in];
            matmul_nt_acc(&mut dxt, &dz, self.kernel.value.data(), batch, 4 * u, n_in);
            dx[t] = dxt;
            dh_next.fill(T::zero());
            matmul_nt_acc(&mut dh_next, &dz, self.recurrent.value.data(), batch, 4 * u, u);
        }
        dx
    }

    pub fn cast<U: Real>(&self) -> LstmCell<U> {
        LstmCell {
            kernel: self.kernel.cast(),
            recurrent: self.recurrent.cast(),
            bias: self.bias.cast(),
        }
    }
}

/// Bidirectional LSTM over `[batch, len, in]` with zero initial states.
/// With `return_sequences` the output is `[batch, len, 2·units]` (forward
/// half first); otherwise `[batch, 2·units]` holding the forward state after
/// the last position and the backward state after the first.
#[derive(Debug, Clone)]
pub struct BiLstm<T: Real = f32> {
    pub forward_cell: LstmCell<T>,
    pub backward_cell: LstmCell<T>,
    pub return_sequences: bool,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache<T: Real> {
    batch: usize,
    steps: Vec<Vec<T>>,
    fwd: DirectionCache<T>,
    bwd: DirectionCache<T>,
}

impl<T: Real> BiLstm<T> {
    pub fn new(name: &str, inputs: usize, units: usize, return_sequences: bool, rng: &mut impl Rng) -> Self {
        BiLstm {
            forward_cell: LstmCell::new(&format!("{name}.fwd"), inputs, units, rng),
            backward_cell: LstmCell::new(&format!("{name}.bwd"), inputs, units, rng),
            return_sequences,
        }
    }

    pub fn units(&self) -> usize {
        self.forward_cell.units()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BiLstmCache<T>)> {
        x.expect_rank(3, "bilstm input")?;
        let (batch, len, n_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        if len == 0 {
            return Err(Error::Shape("bilstm over an empty sequence".into()));
        }
        if n_in != self.forward_cell.inputs() {
            return Err(Error::Shape(format!(
                "bilstm expects {} input features, got {n_in}",
                self.forward_cell.inputs()
            )));
        }
        // Time-major copies of the input rows.
        let steps: Vec<Vec<T>> = (0..len)
            .map(|t| {
                let mut s = Vec::with_capacity(batch * n_in);
                for b in 0..batch {
                    let at = (b * len + t) * n_in;
                    s.extend_from_slice(&x.data()[at..at + n_in]);
                }
                s
            })
            .collect();
        let fwd = self.forward_cell.run(&steps, batch, false);
        let bwd = self.backward_cell.run(&steps, batch, true);
        let u = self.units();
        let y = if self.return_sequences {
            let mut out = Vec::with_capacity(batch * len * 2 * u);
            for b in 0..batch {
                for t in 0..len {
                    out.extend_from_slice(&fwd.hidden[t][b * u..(b + 1) * u]);
                    out.extend_from_slice(&bwd.hidden[t][b * u..(b + 1) * u]);
                }
            }
            Tensor::from_parts(vec![batch, len, 2 * u], out)
        } else {
            let mut out = Vec::with_capacity(batch * 2 * u);
            for b in 0..batch {
                out.extend_from_slice(&fwd.hidden[len - 1][b * u..(b + 1) * u]);
                out.extend_from_slice(&bwd.hidden[0][b * u..(b + 1) * u]);
            }
            Tensor::from_parts(vec![batch, 2 * u], out)
        };
        Ok((y, BiLstmCache { batch, steps, fwd, bwd }))
    }

    pub fn backward(&mut self, cache: &BiLstmCache<T>, dy: &Tensor<T>) -> Tensor<T> {
        let (batch, len) = (cache.batch, cache.steps.len());
        let u = self.units();
        let n_in = self.forward_cell.inputs();
        let mut dh_f = vec![vec![T::zero(); batch * u]; len];
        let mut dh_b = vec![vec![T::zero(); batch * u]; len];
        let g = dy.data();
        if self.return_sequences {
            for b in 0..batch {
                for t in 0..len {
                    let at = (b * len + t) * 2 * u;
                    dh_f[t][b * u..(b + 1) * u].copy_from_slice(&g[at..at + u]);
                    dh_b[t][b * u..(b + 1) * u].copy_from_slice(&g[at + u..at + 2 * u]);
                }
            }
        } else {
            for b in 0..batch {
                let at = b * 2 * u;
                dh_f[len - 1][b * u..(b + 1) * u].copy_from_slice(&g[at..at + u]);
                dh_b[0][b * u..(b + 1) * u].copy_from_slice(&g[at + u..at + 2 * u]);
            }
        }
        let dx_f = self
            .forward_cell
            .backprop(&cache.steps, &cache.fwd, &dh_f, batch, false);
        let dx_b = self
            .backward_cell
            .backprop(&cache.steps, &cache.bwd, &dh_b, batch, true);
        let mut dx = vec![T::zero(); batch * len * n_in];
        for t in 0..len {
            for b in 0..batch {
                let at = (b * len + t) * n_in;
                for j in 0..n_in {
                    dx[at + j] = dx_f[t][b * n_in + j] + dx_b[t][b * n_in + j];
                }
            }
        }
        Tensor::from_parts(vec![batch, len, n_in], dx)
    }

    pub fn cast<U: Real>(&self) -> BiLstm<U> {
        BiLstm {
            forward_cell: self.forward_cell.cast(),
            backward_cell: self.backward_cell.cast(),
            return_sequences: self.return_sequences,
        }
    }
}

impl<T: Real> Module<T> for BiLstm<T> {
    fn params(&self) -> Vec<&Parameter<T>> {
        let (f, b) = (&self.forward_cell, &self.backward_cell);
        vec![&f.kernel, &f.recurrent, &f.bias, &b.kernel, &b.recurrent, &b.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let (f, b) = (&mut self.forward_cell, &mut self.backward_cell);
        vec![
            &mut f.kernel,
            &mut f.recurrent,
            &mut f.bias,
            &mut b.kernel,
            &mut b.recurrent,
            &mut b.bias,
        ]
    }
}
