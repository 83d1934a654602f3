//! Mini-batch training with level guidance, Adam and early stopping.

mod adam;
mod early_stop;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use early_stop::{EarlyStopping, Verdict};
pub use loss::{dish_loss, loss_on_tape, loss_terms, LossTerms, LossVars};

use alloc::boxed::Box;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::WindowPair;
use crate::diagnostics::{evaluate, MetricScales};
use crate::error::{Error, Result};
use crate::pipeline::DishModel;
use crate::tape::GradTape;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Weight of the level-guidance term.
    pub alpha: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lr: 1e-3,
            batch_size: 64,
            max_epochs: 50,
            patience: 7,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        loss::check_alpha(self.alpha)?;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("learning rate must be > 0"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::config("batch size, max epochs and patience must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-window training loss over the epoch.
    pub train_loss: f64,
    /// Validation MSE of denormalized forecasts in raw units.
    pub val_mse: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters restored to the best validation epoch.
    pub model: DishModel,
    pub history: History,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TrainError {
    /// Loss or gradients became non-finite. `last_good` holds the best
    /// parameters seen before the failure (the initial ones if none).
    #[error("training diverged in epoch {epoch}: {cause}")]
    Diverged {
        epoch: usize,
        cause: Error,
        last_good: Box<DishModel>,
        history: History,
    },
    #[error(transparent)]
    Core(#[from] Error),
}

fn is_numeric(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. } | Error::NonFiniteGradient { .. })
}

/// Trains on `train`, validating on `val` after every epoch.
pub fn train(
    model: DishModel,
    train: &[WindowPair],
    val: &[WindowPair],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if val.is_empty() {
        return Err(Error::contract("validation set is empty").into());
    }
    train_with_validator(model, train, cfg, |m| {
        Ok(evaluate(m, val, MetricScales::default())?.overall.mse)
    })
}

/// Training loop with a caller-supplied validation score (lower is better).
///
/// Each epoch visits every training window once in an order drawn from the
/// run seed, in batches of `cfg.batch_size`. Per-window gradients of the summed
/// batch loss are accumulated and applied with one Adam step per batch.
pub fn train_with_validator<V>(
    mut model: DishModel,
    train: &[WindowPair],
    cfg: &TrainConfig,
    mut validate: V,
) -> Result<TrainOutcome, TrainError>
where
    V: FnMut(&DishModel) -> Result<f64>,
{
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::contract("training set is empty").into());
    }
    let mut rng = crate::seeded_rng(crate::derive_seed(cfg.seed, 0xba7c));
    let mut adam = AdamState::new(model.store());
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut history = History::default();
    let mut best = model.store().snapshot();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let step = order.chunks(cfg.batch_size).try_for_each(|batch| -> Result<()> {
            model.store_mut().zero_grad();
            for &k in batch {
                epoch_loss += accumulate_window(&mut model, &train[k], cfg.alpha)?;
            }
            adam.step(model.store_mut(), cfg.lr)
        });
        let step = step.and_then(|()| {
            if epoch_loss.is_finite() {
                Ok(())
            } else {
                Err(Error::NonFinite { op: "loss" })
            }
        });
        let diverged = |cause: Error, model: &mut DishModel, history: History| -> TrainError {
            // `best` always matches the store layout.
            let _ = model.store_mut().restore(&best);
            TrainError::Diverged {
                epoch,
                cause,
                last_good: Box::new(model.clone()),
                history,
            }
        };
        if let Err(e) = step {
            return Err(if is_numeric(&e) {
                diverged(e, &mut model, history)
            } else {
                e.into()
            });
        }
        let val_mse = match validate(&model) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => return Err(diverged(Error::NonFinite { op: "validation" }, &mut model, history)),
            Err(e) if is_numeric(&e) => return Err(diverged(e, &mut model, history)),
            Err(e) => return Err(e.into()),
        };
        history.records.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            val_mse,
        });
        match stopper.observe(epoch, val_mse) {
            Verdict::Improved => best = model.store().snapshot(),
            Verdict::Continue => {}
            Verdict::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    model.store_mut().restore(&best)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch: stopper.best().map_or(0, |(e, _)| e),
        stopped_early,
    })
}

/// Forward + backward for one window; gradients accumulate into the model's store.
fn accumulate_window(model: &mut DishModel, window: &WindowPair, alpha: f64) -> Result<f64> {
    let mut tape = GradTape::new();
    let out = model.forward(&mut tape, &window.lookback)?;
    let target = window.horizon.transpose()?;
    let loss = loss_on_tape(&mut tape, out.forecast, &target, out.hori_level, alpha)?;
    let value = tape.value(loss.total).item()?;
    tape.backward(loss.total, model.store_mut())?;
    Ok(value)
}

/// Mean over windows and series of `|level_h − mean(horizon)|`; `None` outside dish mode.
pub fn level_gap(model: &DishModel, windows: &[WindowPair]) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut count = 0usize;
    for w in windows {
        let Some(level) = model.predict(&w.lookback)?.hori_level else {
            return Ok(None);
        };
        let h = w.horizon.rows();
        for (i, phi) in level.iter().enumerate() {
            let mean = w.horizon.column(i).iter().sum::<f64>() / h as f64;
            total += (phi - mean).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::contract("level gap over an empty window set"));
    }
    Ok(Some(total / count as f64))
}
