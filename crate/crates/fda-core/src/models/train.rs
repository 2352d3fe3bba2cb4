//! Minibatch SGD with momentum, optionally mixing in on-the-fly adversaries.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attacks::{run_attack, AttackConfig, AttackError};
use crate::metrics;
use crate::scalar::Scalar;
use crate::tensor::Tape;

use super::{LabeledImages, Model, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("sample {index} has label {label}, model has {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("loss became non-finite ({loss}) at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("adversarial batch generation failed: {0}")]
    Attack(#[from] AttackError),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    /// When set, each batch is 50% clean and 50% adversaries generated
    /// against the current weights with this attack configuration.
    pub adversarial: Option<AttackConfig>,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            lr,
            momentum: 0.9,
            seed,
            adversarial: None,
        }
    }
}

/// Per-epoch running statistics, measured on the batches as they were seen.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    /// Accuracy on the adversarial halves of the batches; present only for
    /// adversarial training.
    pub adv_accuracy: Option<f64>,
}

/// Trains in place; deterministic in `config.seed` (fixed shuffle order).
pub fn train<T: Scalar>(
    model: &mut Model<T>,
    data: &LabeledImages<T>,
    config: &TrainConfig,
) -> Result<Vec<EpochStats>, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let classes = model.num_classes();
    for (index, &label) in data.labels.iter().enumerate() {
        if label >= classes {
            return Err(TrainError::LabelOutOfRange {
                index,
                label,
                classes,
            });
        }
    }

    let lr = T::from_f64(config.lr);
    let momentum = T::from_f64(config.momentum);
    let batch_size = config.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity: Vec<Vec<T>> = model
        .params()
        .iter()
        .map(|p| vec![T::zero(); p.tensor.len()])
        .collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        let mut clean_hits = 0usize;
        let mut clean_seen = 0usize;
        let mut adv_hits = 0usize;
        let mut adv_seen = 0usize;

        for (batch_idx, batch) in order.chunks(batch_size).enumerate() {
            // Adversarial halves are generated against the current weights
            // before the batch gradient is taken.
            let clean_count = match &config.adversarial {
                Some(_) => batch.len().div_ceil(2),
                None => batch.len(),
            };
            let mut adv_images = Vec::new();
            if let Some(attack_cfg) = &config.adversarial {
                for &ix in &batch[clean_count..] {
                    let example = run_attack(model, &data.images[ix], attack_cfg)?;
                    adv_images.push(example.adv);
                }
            }

            let mut tape = Tape::new();
            let param_ids = model.leaf_params(&mut tape);
            let mut batch_loss = None;
            for (pos, &ix) in batch.iter().enumerate() {
                let image = if pos < clean_count {
                    &data.images[ix]
                } else {
                    &adv_images[pos - clean_count]
                };
                let x = tape.constant(image);
                let fwd = model.forward_on_tape_with_params(&mut tape, x, &param_ids)?;
                let label = data.labels[ix];

                let logits: Vec<f64> =
                    tape.value(fwd.logits).data().iter().map(|v| v.as_f64()).collect();
                let hit = metrics::argmax(&logits) == label;
                if pos < clean_count {
                    clean_seen += 1;
                    clean_hits += hit as usize;
                } else {
                    adv_seen += 1;
                    adv_hits += hit as usize;
                }

                let ce = tape
                    .softmax_cross_entropy(fwd.logits, label)
                    .map_err(ModelError::from)?;
                batch_loss = Some(match batch_loss {
                    None => ce,
                    Some(acc) => tape.add(acc, ce).map_err(ModelError::from)?,
                });
            }
            let total = batch_loss.expect("non-empty batch");
            let mean = tape
                .scale(total, T::one() / T::from_usize(batch.len()))
                .map_err(ModelError::from)?;
            let loss = tape.value(mean).item().as_f64();
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    loss,
                });
            }
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();

            tape.backward(mean).map_err(ModelError::from)?;
            for ((param, vel), &id) in model.params_mut().iter_mut().zip(&mut velocity).zip(&param_ids)
            {
                let Some(grad) = tape.grad(id) else { continue };
                for ((w, v), &g) in param
                    .tensor
                    .data_mut()
                    .iter_mut()
                    .zip(vel.iter_mut())
                    .zip(grad.data())
                {
                    *v = momentum * *v + g;
                    *w = *w - lr * *v;
                }
            }
        }

        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / seen as f64,
            train_accuracy: clean_hits as f64 / clean_seen.max(1) as f64,
            adv_accuracy: config
                .adversarial
                .as_ref()
                .map(|_| adv_hits as f64 / adv_seen.max(1) as f64),
        });
    }
    Ok(history)
}

/// Top-1 and top-k accuracy; a label counts for top-k when its rank among
/// the logits is at most k, ties ranked by lower class index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyReport {
    pub top1: f64,
    pub topk: f64,
    pub k: usize,
}

pub fn evaluate_accuracy<T: Scalar>(
    model: &Model<T>,
    data: &LabeledImages<T>,
    k: usize,
) -> Result<AccuracyReport, ModelError> {
    assert!(!data.is_empty(), "evaluate_accuracy needs a non-empty dataset");
    let k = k.clamp(1, model.num_classes());
    let mut top1 = 0usize;
    let mut topk = 0usize;
    for (image, &label) in data.images.iter().zip(&data.labels) {
        let (logits, _) = model.forward(image)?;
        let scores: Vec<f64> = logits.data().iter().map(|v| v.as_f64()).collect();
        let rank = metrics::rank_of(&scores, label).expect("label checked against classes");
        top1 += (rank == 1) as usize;
        topk += (rank <= k) as usize;
    }
    Ok(AccuracyReport {
        top1: top1 as f64 / data.len() as f64,
        topk: topk as f64 / data.len() as f64,
        k,
    })
}
