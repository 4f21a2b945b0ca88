use super::{Real, Tensor};
use crate::{Error, Result};

/// Argmax routing table for pooling backward passes.
#[derive(Debug, Clone)]
pub struct PoolCache {
    input_shape: Vec<usize>,
    /// For every output element, the flat input index it was taken from.
    argmax: Vec<usize>,
}

/// Non-overlapping max pooling over `[batch, len, ch]` with stride `size`.
/// The tail `len % size` positions are dropped; ties pick the first index.
pub fn maxpool1d<T: Real>(x: &Tensor<T>, size: usize) -> Result<(Tensor<T>, PoolCache)> {
    x.expect_rank(3, "maxpool1d input")?;
    let (b, len, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if size == 0 || len < size {
        return Err(Error::Shape(format!("maxpool1d size {size} does not fit length {len}")));
    }
    let out_len = len / size;
    let mut out = Vec::with_capacity(b * out_len * c);
    let mut argmax = Vec::with_capacity(b * out_len * c);
    let data = x.data();
    for bi in 0..b {
        for w in 0..out_len {
            for ch in 0..c {
                let mut best = (bi * len + w * size) * c + ch;
                for k in 1..size {
                    let idx = (bi * len + w * size + k) * c + ch;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_parts(vec![b, out_len, c], out),
        PoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

/// Per-channel maximum over all positions: `[batch, len, ch] -> [batch, ch]`.
pub fn global_maxpool1d<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
    x.expect_rank(3, "global_maxpool1d input")?;
    let (b, len, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if len == 0 {
        return Err(Error::Shape("global max pooling over zero positions".into()));
    }
    let data = x.data();
    let mut out = Vec::with_capacity(b * c);
    let mut argmax = Vec::with_capacity(b * c);
    for bi in 0..b {
        for ch in 0..c {
            let mut best = bi * len * c + ch;
            for t in 1..len {
                let idx = (bi * len + t) * c + ch;
                if data[idx] > data[best] {
                    best = idx;
                }
            }
            out.push(data[best]);
            argmax.push(best);
        }
    }
    Ok((
        Tensor::from_parts(vec![b, c], out),
        PoolCache {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

/// Route each output gradient to the input element it was selected from.
pub fn pool_backward<T: Real>(cache: &PoolCache, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(&cache.input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(dy.data()) {
        d[idx] += g;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use crate::nn::Parameter;
    use crate::seed;

    #[test]
    fn hand_traced_maxpool() {
        let x = Tensor::new(&[1, 6, 1], vec![3.0f64, 1.0, 4.0, 1.0, 5.0, 9.0]).unwrap();
        let (y, _) = maxpool1d(&x, 3).unwrap();
        assert_eq!(y.data(), &[4.0, 9.0]);
        let (y, _) = maxpool1d(&Tensor::<f32>::zeros(&[2, 100, 4]), 3).unwrap();
        assert_eq!(y.shape(), &[2, 33, 4]);
        // A 100-token title after a width-3 valid convolution.
        let (y, _) = maxpool1d(&Tensor::<f32>::zeros(&[2, 98, 4]), 3).unwrap();
        assert_eq!(y.shape(), &[2, 32, 4]);
        assert!(maxpool1d(&Tensor::<f32>::zeros(&[1, 2, 1]), 3).is_err());
    }

    #[test]
    fn ties_route_to_first() {
        let x = Tensor::new(&[1, 6, 1], vec![2.0f64; 6]).unwrap();
        let (y, cache) = maxpool1d(&x, 3).unwrap();
        assert_eq!(y.data(), &[2.0, 2.0]);
        let dx = pool_backward(&cache, &Tensor::new(&[1, 2, 1], vec![1.0, 1.0]).unwrap());
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn global_pool_values() {
        let x = Tensor::new(&[1, 3, 2], vec![1.0f64, -5.0, 7.0, -1.0, 2.0, -3.0]).unwrap();
        let (y, _) = global_maxpool1d(&x).unwrap();
        assert_eq!(y.data(), &[7.0, -1.0]);
        let single = Tensor::new(&[2, 1, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_maxpool1d(&single).unwrap().0.data(), single.data());
        assert!(global_maxpool1d(&Tensor::<f64>::zeros(&[1, 0, 2])).is_err());
    }

    #[test]
    fn gradient_checks() {
        for s in 0..5 {
            let mut rng = seed::rng(s);
            let x = Parameter::<f64>::normal("x", &[2, 7, 3], 1.0, &mut rng).value;
            let r = Parameter::<f64>::normal("r", &[2, 7, 3], 1.0, &mut rng).value;
            let shape = x.shape().to_vec();

            let (y, cache) = maxpool1d(&x, 3).unwrap();
            let dy = Tensor::new(y.shape(), r.data()[..y.len()].to_vec()).unwrap();
            let dx = pool_backward(&cache, &dy);
            let mut theta = x.data().to_vec();
            let err = grad_check(&mut theta, dx.data(), 1e-5, |th| {
                let (y, _) = maxpool1d(&Tensor::new(&shape, th.to_vec()).unwrap(), 3).unwrap();
                y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
            })
            .unwrap();
            assert!(err < 1e-4, "maxpool seed {s}: {err}");

            let (y, cache) = global_maxpool1d(&x).unwrap();
            let dy = Tensor::new(y.shape(), r.data()[..y.len()].to_vec()).unwrap();
            let dx = pool_backward(&cache, &dy);
            let err = grad_check(&mut theta, dx.data(), 1e-5, |th| {
                let (y, _) = global_maxpool1d(&Tensor::new(&shape, th.to_vec()).unwrap()).unwrap();
                y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
            })
            .unwrap();
            assert!(err < 1e-4, "global seed {s}: {err}");
        }
    }
}
