//! Mini-batch training loop.

use serde::{Deserialize, Serialize};

use crate::autoencoder::ModelWeights;
use crate::dataset::{batch_iterator, example_seed, PairSource};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffles.
    pub shuffle_seed: u64,
    /// Number given to the first epoch run, so resumed runs keep counting.
    pub start_epoch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            adam: AdamConfig::default(),
            shuffle_seed: 0,
            start_epoch: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0
            && (0.0..1.0).contains(&a.beta1)
            && (0.0..1.0).contains(&a.beta2)
            && a.epsilon > 0.0)
        {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean over the epoch's batches, measured before each update.
    pub train_mse: f64,
    pub holdout_mse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Weights from the epoch with the lowest held-out (else training) loss.
    pub best: ModelWeights,
    /// Optimizer state matching `best`, for resuming from it.
    pub best_adam: AdamState,
    pub best_epoch: Option<usize>,
}

fn check_source(model: &ModelWeights, source: &dyn PairSource, what: &str) -> Result<()> {
    let n = model.config.num_samples;
    if source.num_samples() != n {
        return Err(Error::Config(format!(
            "{what} has {} samples per signal but the model expects {n}",
            source.num_samples()
        )));
    }
    if source.is_empty() {
        return Err(Error::Config(format!("{what} is empty")));
    }
    Ok(())
}

/// MSE between model output and clean label over every element of `source`.
pub fn evaluate_mse(
    model: &ModelWeights,
    source: &dyn PairSource,
    batch_size: usize,
) -> Result<f64> {
    check_source(model, source, "evaluation data")?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for batch in batch_iterator(source, batch_size, None)? {
        let (dirty, clean) = batch?;
        let out = model.forward(&dirty)?;
        for (p, t) in out.data().iter().zip(clean.data()) {
            let d = (p - t) as f64;
            sum += d * d;
        }
        count += out.len();
    }
    Ok(sum / count as f64)
}

/// Minimizes MSE(forward(dirty), clean) with Adam. `on_epoch` sees each log row
/// as it is produced.
pub fn train(
    model: &mut ModelWeights,
    train_data: &dyn PairSource,
    holdout: Option<&dyn PairSource>,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    check_source(model, train_data, "training data")?;
    if let Some(h) = holdout {
        check_source(model, h, "held-out data")?;
    }
    model.zero_grad();

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best = model.clone();
    let mut best_adam = adam.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    for e in 0..cfg.epochs {
        let epoch = cfg.start_epoch + e;
        let seed = example_seed(cfg.shuffle_seed, epoch as u64);
        let mut weighted = 0.0;
        let mut seen = 0usize;
        for batch in batch_iterator(train_data, cfg.batch_size, Some(seed))? {
            let (dirty, clean) = batch?;
            let b = dirty.shape()[0];
            let loss = model.loss_and_grad(&dirty, &clean, true)?;
            if !loss.is_finite() {
                return Err(Error::Internal(format!(
                    "training loss became {loss} in epoch {epoch}"
                )));
            }
            adam_step(&mut model.params_mut(), adam)?;
            weighted += loss * b as f64;
            seen += b;
        }
        let train_mse = weighted / seen as f64;
        let holdout_mse = holdout
            .map(|h| evaluate_mse(model, h, cfg.batch_size))
            .transpose()?;
        let row = EpochLog {
            epoch,
            train_mse,
            holdout_mse,
        };
        on_epoch(&row);
        log.push(row);
        let score = holdout_mse.unwrap_or(train_mse);
        if score < best_loss {
            best_loss = score;
            best = model.clone();
            best_adam = adam.clone();
            best_epoch = Some(epoch);
        }
    }
    Ok(TrainOutcome {
        log,
        best,
        best_adam,
        best_epoch,
    })
}

/// Fresh Adam state for `model`.
pub fn new_adam(model: &ModelWeights, config: AdamConfig) -> AdamState {
    AdamState::new(config, model.params())
}
