//! Central finite-difference gradient checking.

use super::{Module, Real};
use crate::{Error, Result};

/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compare `analytic` against central differences of `f` at `theta`,
/// coordinate by coordinate, and return the largest relative error.
/// `theta` is restored before returning.
pub fn grad_check(theta: &mut [f64], analytic: &[f64], step: f64, f: impl FnMut(&[f64]) -> f64) -> Result<f64> {
    let all: Vec<usize> = (0..theta.len()).collect();
    grad_check_coords(theta, analytic, &all, step, f)
}

/// [`grad_check`] restricted to the listed coordinates.
pub fn grad_check_coords(
    theta: &mut [f64],
    analytic: &[f64],
    coords: &[usize],
    step: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Result<f64> {
    if theta.len() != analytic.len() {
        return Err(Error::Shape(format!(
            "{} coordinates but {} analytic gradients",
            theta.len(),
            analytic.len()
        )));
    }
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = theta[i];
        theta[i] = orig + step;
        let plus = f(theta);
        theta[i] = orig - step;
        let minus = f(theta);
        theta[i] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(Error::NonFinite(format!(
                "coordinate {i}: analytic {} numeric {numeric}",
                analytic[i]
            )));
        }
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(worst)
}

/// Concatenated values of all trainable parameters.
pub fn flatten_trainable<T: Real, M: Module<T> + ?Sized>(m: &M) -> Vec<f64> {
    m.params()
        .into_iter()
        .filter(|p| p.trainable())
        .flat_map(|p| p.value.data().iter().map(|v| v.as_f64()))
        .collect()
}

/// Concatenated gradients of all trainable parameters.
pub fn flatten_trainable_grads<T: Real, M: Module<T> + ?Sized>(m: &M) -> Vec<f64> {
    m.params()
        .into_iter()
        .filter(|p| p.trainable())
        .flat_map(|p| p.grad.data().iter().map(|v| v.as_f64()))
        .collect()
}

/// Inverse of [`flatten_trainable`].
pub fn assign_trainable<T: Real, M: Module<T> + ?Sized>(m: &mut M, theta: &[f64]) {
    let mut it = theta.iter();
    for p in m.params_mut().into_iter().filter(|p| p.trainable()) {
        for v in p.value.data_mut() {
            *v = T::lit(*it.next().expect("theta has enough coordinates"));
        }
    }
    assert!(it.next().is_none(), "theta has leftover coordinates");
}


/// Finite-difference check of a layer under the scalar probe
/// `loss = Σ forward(x) ⊙ r`, with `r` drawn from `seed`.
///
/// `backward` receives a clone of `module` with zeroed gradients, the input
/// and `dy = r`; it must run its own forward pass for caches and return the
/// input gradient. Returns the worst relative error over all trainable
/// parameters and, when `check_input` is set, over the input coordinates.
pub fn check_layer<M: Module<f64> + Clone>(
    module: &M,
    x: &super::Tensor<f64>,
    seed: u64,
    step: f64,
    check_input: bool,
    forward: impl Fn(&M, &super::Tensor<f64>) -> super::Tensor<f64>,
    backward: impl Fn(&mut M, &super::Tensor<f64>, &super::Tensor<f64>) -> super::Tensor<f64>,
) -> Result<f64> {
    use rand_distr::{Distribution, StandardNormal};

    let y = forward(module, x);
    let mut rng = crate::seed::rng(seed);
    let r_data: Vec<f64> = (0..y.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let r = super::Tensor::new(y.shape(), r_data)?;
    let probe = |y: &super::Tensor<f64>| -> f64 { y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum() };

    let mut analytic_module = module.clone();
    analytic_module.zero_grad();
    let dx = backward(&mut analytic_module, x, &r);
    let analytic = flatten_trainable_grads(&analytic_module);

    let mut theta = flatten_trainable(module);
    let mut worst = grad_check(&mut theta, &analytic, step, |th| {
        let mut m = module.clone();
        assign_trainable(&mut m, th);
        probe(&forward(&m, x))
    })?;

    if check_input {
        let mut xs: Vec<f64> = x.data().to_vec();
        let err = grad_check(&mut xs, dx.data(), step, |th| {
            let xt = super::Tensor::new(x.shape(), th.to_vec()).expect("same shape");
            probe(&forward(module, &xt))
        })?;
        worst = worst.max(err);
    }
    Ok(worst)
}
