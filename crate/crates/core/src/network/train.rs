use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{adam_step, mse_loss_and_grad, AdamState, Network};
use crate::datapipe::WindowedDataset;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Validation loss must beat the best so far by at least this much to count
/// as an improvement.
const MIN_IMPROVEMENT: f64 = 1e-12;

/// Samples per forward pass when only predicting.
const PREDICT_CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    /// Time-based decay per optimizer step.
    pub decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 1e-4,
            decay: 1e-5,
            batch_size: 64,
            max_epochs: 300,
            patience: 5,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.base_lr)));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::invalid(format!("decay must be >= 0, got {}", self.decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be >= 1"));
        }
        Ok(())
    }
}

/// `base_lr / (1 + decay * step)`, where `step` counts optimizer updates
/// already applied.
pub fn lr_schedule(cfg: &TrainConfig, step: u64) -> f64 {
    cfg.base_lr / (1.0 + cfg.decay * step as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

fn check_dataset(net: &Network, ds: &WindowedDataset, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset(format!("{what} set has no windows")));
    }
    if ds.n_features != net.config.input_dim {
        return Err(Error::shape(
            "dataset features",
            (net.config.input_dim, net.config.horizon),
            (ds.n_features, ds.horizon),
        ));
    }
    if ds.horizon != net.config.horizon {
        return Err(Error::shape(
            "dataset horizon",
            (net.config.input_dim, net.config.horizon),
            (ds.n_features, ds.horizon),
        ));
    }
    Ok(())
}

/// Minibatch Adam on MSE with early stopping on the validation MSE (scaled
/// space). On return `net` holds the parameters from the best epoch.
pub fn train(net: &mut Network, train_set: &WindowedDataset, val_set: &WindowedDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    check_dataset(net, val_set, "validation")?;
    train_with_validator(net, train_set, cfg, |n, _| {
        let pred = predict_dataset(n, val_set)?;
        Ok(mse_loss_and_grad(&pred, &val_set.targets.transpose())?.0)
    })
}

/// [`train`] with a caller-supplied validation loss, evaluated after every
/// epoch on the current parameters.
pub fn train_with_validator<F>(net: &mut Network, train_set: &WindowedDataset, cfg: &TrainConfig, mut validate: F) -> Result<TrainReport>
where
    F: FnMut(&Network, usize) -> Result<f64>,
{
    cfg.validate()?;
    net.validate()?;
    check_dataset(net, train_set, "training")?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(net.tensors().into_iter().map(|(_, m)| m));
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Network)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (xs, y) = train_set.batch(chunk)?;
            let (pred, cache) = net.forward_sequence(&xs)?;
            let (loss, d_pred) = mse_loss_and_grad(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    stage: "training",
                    value: loss,
                });
            }
            let grads = net.backward_sequence(&cache, &d_pred)?;
            let lr = lr_schedule(cfg, adam.t);
            adam_step(&mut net.tensors_mut(), &grads.tensors, &mut adam, lr)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_loss = validate(net, epoch)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                stage: "validation",
                value: val_loss,
            });
        }
        log::info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}");
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });

        let improved = best
            .as_ref()
            .is_none_or(|(_, b, _)| val_loss < b - MIN_IMPROVEMENT);
        if improved {
            best = Some((epoch, val_loss, net.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_epoch, best_val_loss, snapshot) = best.expect("at least one epoch ran");
    *net = snapshot;
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_loss,
        stopped_early,
    })
}

/// Scaled-space predictions for one batch window.
pub fn predict(net: &Network, window: &[Matrix]) -> Result<Matrix> {
    net.predict_window(window)
}

/// Predictions for every sample, `horizon x samples`.
pub fn predict_dataset(net: &Network, ds: &WindowedDataset) -> Result<Matrix> {
    check_dataset(net, ds, "prediction")?;
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut blocks = Vec::new();
    for chunk in idx.chunks(PREDICT_CHUNK) {
        let (xs, _) = ds.batch(chunk)?;
        blocks.push(net.predict_window(&xs)?);
    }
    Matrix::concat_cols(&blocks)
}
