//! Dense CPU tensors and the layers the three classifiers are built from.
//!
//! Every layer has a forward pass returning its output together with a
//! cache, and a backward pass that consumes the upstream gradient,
//! accumulates parameter gradients and returns the input gradient. Layers
//! are generic over [`Real`] so the same code runs in `f32` for training
//! and `f64` for finite-difference gradient checks.

mod activation;
mod attention;
mod conv;
mod dense;
mod dropout;
mod embedding;
pub mod gradcheck;
mod loss;
mod lstm;
mod norm;
pub mod ops;
mod param;
mod pool;
mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use activation::{gelu, gelu_backward, relu, relu_backward, sigmoid, softmax, softmax_backward, tanh};
pub use attention::{AttentionCache, MultiHeadAttention};
pub use conv::{Conv1d, Conv1dCache};
pub use dense::Dense;
pub use dropout::{dropout, dropout_backward};
pub use embedding::Embedding;
pub use loss::{weighted_cross_entropy, weighted_cross_entropy_with_logits, PROB_FLOOR};
pub use lstm::{BiLstm, BiLstmCache, LstmCell};
pub use norm::{
    BatchNorm1d, BatchNormCache, LayerNorm, LayerNormCache, BATCHNORM_EPS, BATCHNORM_MOMENTUM, LAYERNORM_EPS,
};
pub use param::{Module, ParamRole, Parameter, RngState};
pub use pool::{global_maxpool1d, maxpool1d, pool_backward, PoolCache};
pub use tensor::Tensor;

/// Floating-point element type of tensors.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
