use crate::nn::{Parameter, Real};
use crate::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments for every parameter, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new<T: Real>(params: &[&mut Parameter<T>]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of every trainable parameter. Nothing is
/// changed if any trainable gradient is non-finite.
pub fn adam_step<T: Real>(params: &mut [&mut Parameter<T>], state: &mut AdamState, lr: f64) -> Result<()> {
    if state.m.len() != params.len() || params.iter().zip(&state.m).any(|(p, m)| p.value.len() != m.len()) {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    for p in params.iter().filter(|p| p.trainable()) {
        if let Some(i) = p.grad.data().iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {}[{i}]", p.name)));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        if !p.trainable() {
            continue;
        }
        let Parameter { value, grad, .. } = &mut **p;
        for (((x, g), mi), vi) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            let g = g.as_f64();
            *mi = BETA1 * *mi + (1.0 - BETA1) * g;
            *vi = BETA2 * *vi + (1.0 - BETA2) * g * g;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *x -= T::lit(lr * mhat / (vhat.sqrt() + EPSILON));
        }
    }
    Ok(())
}
