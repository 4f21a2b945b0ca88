//! Class weighting, Adam, the epoch loop with best-epoch retention, and
//! checkpoint files.

mod adam;
mod checkpoint;

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::TitleRecord;
use crate::eval::evaluate;
use crate::models::{ClassifierModel, Scale, TokenBatch, Variant};
use crate::nn::{weighted_cross_entropy_with_logits, Mode, Module, RngState, Tensor};
use crate::tokenize::TokenSequence;
use crate::{seed, Error, Result, NUM_CLASSES};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, restore_into, save_checkpoint, CheckpointHeader,
    TensorEntry, TrainingMetadata, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub class_weighting: bool,
    pub seed: u64,
    /// Log validation accuracy every this many optimizer steps (0 = only
    /// at epoch ends).
    pub eval_every: usize,
}

impl TrainConfig {
    /// Paper presets use the published learning rate, batch size and epoch
    /// count. Desk presets keep the epoch budget but use small batches and
    /// larger steps so a few hundred titles are enough to learn from.
    pub fn preset(variant: Variant, scale: Scale) -> Self {
        let (lr, batch, epochs) = match (variant, scale) {
            (Variant::Word2vecCnn, Scale::Paper) => (1e-4, 256, 25),
            (Variant::GloveBilstm, Scale::Paper) => (1e-3, 256, 8),
            (Variant::Bert, Scale::Paper) => (1e-4, 128, 10),
            (Variant::Word2vecCnn, Scale::Desk) => (1e-2, 16, 25),
            (Variant::GloveBilstm, Scale::Desk) => (1e-2, 16, 8),
            (Variant::Bert, Scale::Desk) => (1e-3, 16, 10),
        };
        TrainConfig {
            learning_rate: lr,
            batch_size: batch,
            epochs,
            class_weighting: true,
            seed: 0,
            eval_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// `w_c = N / (6·n_c)`, and 0 for classes without examples.
pub fn compute_class_weights(counts: &[usize; NUM_CLASSES]) -> Result<[f64; NUM_CLASSES]> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::Empty("all class counts are zero".into()));
    }
    let mut w = [0.0; NUM_CLASSES];
    for (w, &c) in w.iter_mut().zip(counts) {
        if c > 0 {
            *w = n as f64 / (NUM_CLASSES as f64 * c as f64);
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_accuracy: f64,
    pub validation_weighted_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
    /// Which split the per-epoch accuracy was measured on ("validation",
    /// or "train" when no validation records were given).
    pub selection_split: String,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.epochs.get(e - 1))
    }
}

fn labelled(records: &[TitleRecord]) -> Result<Vec<usize>> {
    records
        .iter()
        .map(|r| {
            r.label.map(|l| l.index()).ok_or_else(|| Error::Unlabeled {
                video_id: r.video_id.clone(),
            })
        })
        .collect()
}

fn snapshot(model: &ClassifierModel) -> Vec<Tensor<f32>> {
    model.params().iter().map(|p| p.value.clone()).collect()
}

fn restore(model: &mut ClassifierModel, snap: &[Tensor<f32>]) {
    for (p, v) in model.params_mut().into_iter().zip(snap) {
        p.value = v.clone();
    }
}

/// Weighted cross-entropy of the model's train-mode forward pass on one
/// batch, without updating anything.
pub fn batch_loss(
    model: &ClassifierModel,
    records: &[TitleRecord],
    weights: &[f64; NUM_CLASSES],
    rng: &mut RngState,
) -> Result<f64> {
    let targets = labelled(records)?;
    let titles: Vec<&str> = records.iter().map(|r| r.title.as_str()).collect();
    let batch = TokenBatch::encode(&model.tokenizer, &titles)?;
    let (logits, _) = model.forward(&batch, Mode::Train, rng)?;
    Ok(weighted_cross_entropy_with_logits(&logits, &targets, weights)?.0)
}

/// Train `model` in place. After every epoch the model is scored on the
/// validation records (or the training records if there are none) and the
/// parameters of the best-scoring epoch are kept, earliest on ties.
pub fn fit(
    model: &mut ClassifierModel,
    train: &[TitleRecord],
    validation: &[TitleRecord],
    config: &TrainConfig,
) -> Result<History> {
    config.validate()?;
    let mut history = History {
        selection_split: if validation.is_empty() { "train" } else { "validation" }.to_string(),
        ..History::default()
    };
    if config.epochs == 0 {
        return Ok(history);
    }
    if train.is_empty() {
        return Err(Error::Empty("training split has no records".into()));
    }
    let targets = labelled(train)?;
    labelled(validation)?;
    if validation.is_empty() {
        warn!("no validation records; selecting the best epoch on training accuracy");
    }
    let weights = if config.class_weighting {
        let mut counts = [0usize; NUM_CLASSES];
        for &t in &targets {
            counts[t] += 1;
        }
        compute_class_weights(&counts)?
    } else {
        [1.0; NUM_CLASSES]
    };
    let seqs: Vec<TokenSequence> = train.iter().map(|r| model.tokenizer.encode(&r.title)).collect();
    let selection = if validation.is_empty() { train } else { validation };

    let mut dropout_rng = RngState::new(seed::derive(config.seed, "dropout"));
    let mut adam = AdamState::new(&model.params_mut());
    let mut best: Option<(f64, Vec<Tensor<f32>>)> = None;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive_indexed(
            config.seed,
            "shuffle",
            epoch as u64,
        )));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch_seqs: Vec<TokenSequence> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let batch = TokenBatch::from_sequences(&batch_seqs)?;
            let batch_targets: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            model.zero_grad();
            let (logits, cache) = model.forward(&batch, Mode::Train, &mut dropout_rng)?;
            let (loss, dlogits) = weighted_cross_entropy_with_logits(&logits, &batch_targets, &weights)?;
            if !loss.is_finite() {
                if let Some((_, snap)) = &best {
                    restore(model, snap);
                }
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, step {step} (last completed epoch {})",
                    epoch - 1
                )));
            }
            model.backward(&cache, &dlogits)?;
            model.commit(&cache);
            adam_step(&mut model.params_mut(), &mut adam, config.learning_rate).map_err(|e| match e {
                Error::NonFinite(m) => {
                    Error::NonFinite(format!("{m} at epoch {epoch} (last completed epoch {})", epoch - 1))
                }
                e => e,
            })?;
            loss_sum += loss * chunk.len() as f64;
            step += 1;
            if config.eval_every > 0 && step % config.eval_every == 0 {
                let e = evaluate(&*model, selection, 256)?;
                info!(
                    "step {step}: {} accuracy {:.4}",
                    history.selection_split, e.report.accuracy
                );
            }
        }
        let e = evaluate(&*model, selection, 256)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            validation_accuracy: e.report.accuracy,
            validation_weighted_f1: e.report.weighted.f1,
        };
        info!(
            "epoch {epoch}: loss {:.4}, {} accuracy {:.4}, weighted F1 {:.4}",
            record.train_loss, history.selection_split, record.validation_accuracy, record.validation_weighted_f1
        );
        if best.as_ref().is_none_or(|(acc, _)| record.validation_accuracy > *acc) {
            best = Some((record.validation_accuracy, snapshot(model)));
            history.best_epoch = Some(epoch);
        }
        history.epochs.push(record);
    }
    if let Some((_, snap)) = &best {
        restore(model, snap);
    }
    Ok(history)
}
