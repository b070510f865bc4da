use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{ModelConfig, Network, Sample};
use crate::neural::{Adam, AdamConfig, Mode, ParamStore, Scalar, Tape};
use crate::util::mix_seed;
use crate::{Error, Result};

/// Losses after one epoch; `epoch` counts from 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops once the validation loss has not decreased for `patience`
/// consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.wait = 0;
            return StopDecision::Improved;
        }
        self.wait += 1;
        if self.wait >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel<S> {
    pub network: Network<S>,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were restored.
    pub best_epoch: usize,
}

/// Trains a freshly initialized network.
pub fn fit<S: Scalar>(
    config: &ModelConfig,
    train: &[&Sample<S>],
    val: &[&Sample<S>],
) -> Result<TrainedModel<S>> {
    fit_with_init(Network::new(config)?, train, val)
}

/// Trains `network` from its current weights with Adam and early stopping,
/// then restores the weights of the best validation epoch.
pub fn fit_with_init<S: Scalar>(
    mut network: Network<S>,
    train: &[&Sample<S>],
    val: &[&Sample<S>],
) -> Result<TrainedModel<S>> {
    let config = network.config().clone();
    if train.len() < 2 || val.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 training and 1 validation trial, got {} and {}",
            train.len(),
            val.len()
        )));
    }
    let first = train[0].label;
    if train.iter().all(|s| s.label == first) {
        return Err(Error::InvalidParameter(
            "training set contains a single class".into(),
        ));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x5A1F));
    let mut dropout_rng = Xoshiro256PlusPlus::seed_from_u64(mix_seed(config.seed, 0xD809));
    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best: ParamStore<S> = network.params().clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for range in batch_ranges(order.len(), config.batch_size) {
            let batch: Vec<&Sample<S>> = order[range].iter().map(|&i| train[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
            let (input, ops) = network.assemble(&batch)?;
            let mut tape = Tape::new();
            let bound = network.params().bind(&mut tape);
            let (logits, updates) =
                network.forward(&mut tape, &bound, input, &ops, Mode::Train, &mut dropout_rng)?;
            let loss = tape.softmax_cross_entropy(logits, &labels)?;
            let value = tape.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(Error::TrainingAborted(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            total += value * batch.len() as f64;
            let grads = tape.backward(loss)?;
            adam.step(network.params_mut(), &bound, &grads)?;
            network.apply_updates(updates);
        }
        let train_loss = total / train.len() as f64;
        let val_loss = evaluate_loss(&network, val)?;
        if !val_loss.is_finite() {
            return Err(Error::TrainingAborted(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        match stopper.update(epoch, val_loss) {
            StopDecision::Improved => best = network.params().clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    *network.params_mut() = best;
    Ok(TrainedModel {
        network,
        history,
        best_epoch: stopper.best_epoch(),
    })
}

/// Mean eval-mode cross-entropy over `samples`.
pub(crate) fn evaluate_loss<S: Scalar>(network: &Network<S>, samples: &[&Sample<S>]) -> Result<f64> {
    let m = network.config().n_classes;
    let probs = network.predict_proba(samples)?;
    let mut total = 0.0;
    for (row, s) in probs.chunks(m).zip(samples) {
        if s.label >= m {
            return Err(Error::InvalidParameter(format!(
                "label {} outside [0, {m})",
                s.label
            )));
        }
        // floor keeps a saturated softmax from producing an infinite loss
        total -= libm::log(row[s.label].as_f64().max(1e-30));
    }
    Ok(total / samples.len() as f64)
}

/// Consecutive batch ranges; a trailing batch of one sample is merged into
/// the previous batch so batch statistics stay defined.
pub(crate) fn batch_ranges(len: usize, batch_size: usize) -> Vec<core::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + batch_size).min(len);
        out.push(start..end);
        start = end;
    }
    if out.len() > 1 && out.last().map(|r| r.len()) == Some(1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}
