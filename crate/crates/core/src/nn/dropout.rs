use rand::Rng;

use super::{Mode, Real, RngState, Tensor};
use crate::{Error, Result};

/// Inverted dropout. In train mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`; eval
/// mode is the identity. Returns the multiplicative mask when one was
/// applied.
pub fn dropout<T: Real>(
    x: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut RngState,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let mut stream = rng.stream();
    let keep = T::lit(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if stream.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::from_parts(x.shape().to_vec(), data), Some(mask)))
}

pub fn dropout_backward<T: Real>(mask: Option<&[T]>, dy: &Tensor<T>) -> Tensor<T> {
    match mask {
        None => dy.clone(),
        Some(m) => {
            let data = dy.data().iter().zip(m).map(|(&g, &k)| g * k).collect();
            Tensor::from_parts(dy.shape().to_vec(), data)
        }
    }
}
