use log::debug;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::{ClassifierModel, TokenBatch};
use crate::nn::gradcheck::{flatten_trainable_grads, relative_error};
use crate::nn::{weighted_cross_entropy_with_logits, Mode, Module, RngState};
use crate::{seed, Result};

/// Settings for [`grad_check_model`].
#[derive(Debug, Clone, Copy)]
pub struct ModelGradCheck {
    pub mode: Mode,
    /// Probe this many random coordinates of every trainable tensor, or
    /// every coordinate when `None`.
    pub per_tensor: Option<usize>,
    /// Standard deviation of noise added to all trainable values first.
    /// Zero-initialized biases and the zero PAD row otherwise sit exactly
    /// on ReLU kinks, where central differences are meaningless.
    pub jitter: f64,
    pub step: f64,
    pub seed: u64,
}

impl Default for ModelGradCheck {
    fn default() -> Self {
        ModelGradCheck {
            mode: Mode::Train,
            per_tensor: None,
            jitter: 0.05,
            step: 1e-5,
            seed: 0,
        }
    }
}

/// Worst relative error between backpropagated and central-difference
/// gradients of the weighted cross-entropy of a full classifier. Dropout
/// masks are replayed from the same RNG state for every evaluation.
pub fn grad_check_model(
    model: &ClassifierModel<f64>,
    batch: &TokenBatch,
    targets: &[usize],
    weights: &[f64],
    opts: ModelGradCheck,
) -> Result<f64> {
    let mut model = model.clone();
    let mut noise = seed::rng(seed::derive(opts.seed, "gradcheck-jitter"));
    for p in model.params_mut().into_iter().filter(|p| p.trainable()) {
        for v in p.value.data_mut() {
            let z: f64 = StandardNormal.sample(&mut noise);
            *v += z * opts.jitter;
        }
    }
    let rng0 = RngState::new(opts.seed);
    let loss = |m: &ClassifierModel<f64>| -> Result<f64> {
        let (logits, _) = m.forward(batch, opts.mode, &mut rng0.clone())?;
        Ok(weighted_cross_entropy_with_logits(&logits, targets, weights)?.0)
    };

    let mut analytic = model.clone();
    analytic.zero_grad();
    let (logits, cache) = analytic.forward(batch, opts.mode, &mut rng0.clone())?;
    let (_, dlogits) = weighted_cross_entropy_with_logits(&logits, targets, weights)?;
    analytic.backward(&cache, &dlogits)?;
    let grads = flatten_trainable_grads(&analytic);

    // (tensor index, offset, flat coordinate)
    let mut coords = Vec::new();
    let mut pick = seed::rng(seed::derive(opts.seed, "gradcheck-coords"));
    let mut start = 0;
    for (ti, p) in model.params().into_iter().filter(|p| p.trainable()).enumerate() {
        let mut offsets: Vec<usize> = (0..p.value.len()).collect();
        if let Some(k) = opts.per_tensor {
            offsets.shuffle(&mut pick);
            offsets.truncate(k);
        }
        coords.extend(offsets.into_iter().map(|o| (ti, o, start + o)));
        start += p.value.len();
    }

    let mut worst = 0.0f64;
    for (ti, off, flat) in coords {
        let orig = coordinate(&mut model, ti, off, None);
        coordinate(&mut model, ti, off, Some(orig + opts.step));
        let plus = loss(&model)?;
        coordinate(&mut model, ti, off, Some(orig - opts.step));
        let minus = loss(&model)?;
        coordinate(&mut model, ti, off, Some(orig));
        let numeric = (plus - minus) / (2.0 * opts.step);
        let err = relative_error(grads[flat], numeric);
        if err > worst {
            debug!(
                "{}[{off}]: analytic {} numeric {numeric}",
                model
                    .params()
                    .into_iter()
                    .filter(|p| p.trainable())
                    .nth(ti)
                    .unwrap()
                    .name,
                grads[flat]
            );
            worst = err;
        }
    }
    Ok(worst)
}

/// Read, and optionally overwrite, one trainable coordinate.
fn coordinate(m: &mut ClassifierModel<f64>, tensor: usize, offset: usize, set: Option<f64>) -> f64 {
    let p = m
        .params_mut()
        .into_iter()
        .filter(|p| p.trainable())
        .nth(tensor)
        .expect("tensor index in range");
    let v = &mut p.value.data_mut()[offset];
    if let Some(x) = set {
        *v = x;
    }
    *v
}
