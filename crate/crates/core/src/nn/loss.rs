use super::activation::softmax_row;
use super::{Real, Tensor};
use crate::{Error, Result};

/// Probabilities are clamped to this floor before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

fn check_inputs<T: Real>(x: &Tensor<T>, targets: &[usize], weights: &[f64]) -> Result<(usize, f64)> {
    let c = x.last_dim();
    if x.shape().len() != 2 || x.rows() != targets.len() || weights.len() != c {
        return Err(Error::Shape(format!(
            "loss inputs {:?}, {} targets, {} weights",
            x.shape(),
            targets.len(),
            weights.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Empty("loss over an empty batch".into()));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::Shape(format!("target {t} outside {c} classes")));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Config(format!(
            "class weights must be finite and non-negative: {weights:?}"
        )));
    }
    let total: f64 = targets.iter().map(|&t| weights[t]).sum();
    if total <= 0.0 {
        return Err(Error::Config("targets carry zero total class weight".into()));
    }
    Ok((c, total))
}

/// `Σ_i w[y_i]·(−ln p[i, y_i]) / Σ_i w[y_i]` over a batch of probability rows.
pub fn weighted_cross_entropy<T: Real>(probs: &Tensor<T>, targets: &[usize], weights: &[f64]) -> Result<f64> {
    let (c, total) = check_inputs(probs, targets, weights)?;
    let sum: f64 = probs
        .data()
        .chunks_exact(c)
        .zip(targets)
        .map(|(row, &t)| weights[t] * -row[t].as_f64().max(PROB_FLOOR).ln())
        .sum();
    Ok(sum / total)
}

/// The same loss evaluated on softmax(logits), together with its gradient
/// with respect to the logits: `w[y_i] / W · (p_i − onehot(y_i))`.
pub fn weighted_cross_entropy_with_logits<T: Real>(
    logits: &Tensor<T>,
    targets: &[usize],
    weights: &[f64],
) -> Result<(f64, Tensor<T>)> {
    let (c, total) = check_inputs(logits, targets, weights)?;
    let mut grad = logits.clone();
    let mut sum = 0.0;
    for (row, &t) in grad.data_mut().chunks_exact_mut(c).zip(targets) {
        softmax_row(row);
        sum += weights[t] * -row[t].as_f64().max(PROB_FLOOR).ln();
        let scale = T::lit(weights[t] / total);
        row[t] -= T::one();
        row.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((sum / total, grad))
}
