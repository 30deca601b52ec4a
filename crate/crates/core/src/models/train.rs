//! Mini-batch AdamW training for the deep models.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::WindowSample;
use crate::error::{Error, Result};
use crate::models::neural::{argmax, NeuralModel};
use crate::nn::layers::Mode;
use crate::nn::{AdamW, AdamWConfig, Tape};
use crate::rng::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    /// Keep a copy of the parameters from the epoch with the best
    /// evaluation accuracy.
    pub keep_best: bool,
    /// Batch size for evaluation-mode passes.
    pub eval_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            optimizer: AdamWConfig::default(),
            keep_best: false,
            eval_chunk: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_chunk == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) || !(o.weight_decay >= 0.0) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training-mode loss over the epoch's mini-batches.
    pub train_loss: f64,
    pub eval_loss: f64,
    pub eval_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub model: NeuralModel,
    /// Parameters from the best evaluation epoch, when requested.
    pub best: Option<NeuralModel>,
    pub log: TrainingLog,
}

const SHUFFLE_STREAM: u64 = 0x5f;
const DROPOUT_STREAM: u64 = 0xd0;

/// Evaluation-mode mean loss and accuracy.
pub fn eval_loss_accuracy(model: &mut NeuralModel, samples: &[WindowSample], chunk: usize) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for part in samples.chunks(chunk.max(1)) {
        let rows: Vec<&[f64]> = part.iter().map(|s| s.values.as_slice()).collect();
        let targets: Vec<usize> = part.iter().map(|s| s.label.code()).collect();
        let logits = model.logits(&rows)?;
        let mut tape = Tape::new();
        let l = tape.constant(logits);
        let ce = tape.cross_entropy(l, &targets)?;
        loss += tape.value(ce).item() * part.len() as f64;
        let classes = tape.value(l).dim(1);
        correct += tape
            .value(l)
            .data()
            .chunks(classes)
            .zip(&targets)
            .filter(|(row, &t)| argmax(row) == t)
            .count();
    }
    Ok((loss / samples.len() as f64, correct as f64 / samples.len() as f64))
}

/// Trains `model` on `train`, scoring `eval` after every epoch. Identical
/// inputs and seed give an identical log and parameters.
pub fn train(
    mut model: NeuralModel,
    train: &[WindowSample],
    eval: &[WindowSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("no training samples".into()));
    }
    let mut opt = AdamW::new(cfg.optimizer, &model.store);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainingLog {
        seed,
        ..Default::default()
    };
    let mut best: Option<(f64, NeuralModel)> = None;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut derived_rng(seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut drop_rng = derived_rng(seed, &[DROPOUT_STREAM, epoch as u64]);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f64]> = idx.iter().map(|&i| train[i].values.as_slice()).collect();
            let targets: Vec<usize> = idx.iter().map(|&i| train[i].label.code()).collect();
            let mut tape = Tape::new();
            let x = tape.constant(model.input_tensor(&rows)?);
            let logits = model.forward(&mut tape, x, Mode::Train, &mut drop_rng)?;
            let loss = tape.cross_entropy(logits, &targets).map_err(|e| Error::Training {
                epoch,
                message: e.to_string(),
            })?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: format!("non-finite loss {value}"),
                });
            }
            let grads = tape.backward(loss);
            model.store.zero_grad();
            grads.accumulate_into(&mut model.store);
            opt.step(&mut model.store);
            loss_sum += value;
            batches += 1;
        }
        let (eval_loss, eval_accuracy) = eval_loss_accuracy(&mut model, eval, cfg.eval_chunk)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            eval_loss,
            eval_accuracy,
        };
        log::info!(
            "seed {seed} epoch {epoch}: train loss {:.4}, eval loss {:.4}, eval acc {:.4}",
            record.train_loss,
            record.eval_loss,
            record.eval_accuracy
        );
        if cfg.keep_best && best.as_ref().is_none_or(|(acc, _)| eval_accuracy > *acc) {
            best = Some((eval_accuracy, model.clone()));
            log.best_epoch = Some(epoch);
        }
        log.epochs.push(record);
    }
    Ok(TrainOutcome {
        model,
        best: best.map(|(_, m)| m),
        log,
    })
}
