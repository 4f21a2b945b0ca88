use super::{Real, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of relu given its input.
pub fn relu_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub(crate) fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn tanh<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

const GELU_COEF: f64 = 0.044_715;

/// GELU, tanh approximation.
pub fn gelu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let c = T::lit(GELU_COEF);
    let half = T::lit(0.5);
    x.map(|v| half * v * (T::one() + (k * (v + c * v * v * v)).tanh()))
}

pub fn gelu_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let c = T::lit(GELU_COEF);
    let three_c = T::lit(3.0 * GELU_COEF);
    let half = T::lit(0.5);
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&v, &g)| {
            let t = (k * (v + c * v * v * v)).tanh();
            let d = half * (T::one() + t) + half * v * (T::one() - t * t) * k * (T::one() + three_c * v * v);
            g * d
        })
        .collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

/// Softmax over the last axis, stabilized by subtracting the row maximum.
pub fn softmax<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let n = x.last_dim();
    let mut out = x.clone();
    if n == 0 {
        return out;
    }
    for row in out.data_mut().chunks_exact_mut(n) {
        softmax_row(row);
    }
    out
}

pub(crate) fn softmax_row<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Gradient of softmax given its output `y`.
pub fn softmax_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let n = y.last_dim();
    let mut dx = Tensor::zeros_like(y);
    for ((yr, gr), dr) in y
        .data()
        .chunks_exact(n)
        .zip(dy.data().chunks_exact(n))
        .zip(dx.data_mut().chunks_exact_mut(n))
    {
        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for ((d, &a), &g) in dr.iter_mut().zip(yr).zip(gr) {
            *d = a * (g - dot);
        }
    }
    dx
}
