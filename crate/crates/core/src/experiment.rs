//! One train/evaluate run over a frame: split, window, fit, test.

use crate::data::{build_datasets, Datasets, SeriesFrame, SplitSpec};
use crate::diagnostics::{evaluate, Evaluation, MetricScales};
use crate::error::{Error, Result};
use crate::pipeline::{DishModel, ModelConfig, NormMode, ZscoreStats};
use crate::training::{level_gap, train, TrainConfig, TrainError, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    /// `series` is overwritten with the frame width.
    pub model: ModelConfig,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub scales: MetricScales,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub outcome: TrainOutcome,
    pub test: Evaluation,
    /// Mean `|level_h − horizon mean|` on the test windows (dish mode only).
    pub level_gap: Option<f64>,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
}

/// Windowed partitions plus an untrained model seeded from `spec.train.seed`.
pub fn prepare(frame: &SeriesFrame, spec: &RunSpec) -> Result<(Datasets, DishModel)> {
    let mut cfg = spec.model;
    cfg.series = frame.width();
    let data = build_datasets(frame, &spec.split, cfg.lookback, cfg.horizon)?;
    let mut model = DishModel::new(cfg, spec.train.seed)?;
    if cfg.mode == NormMode::Zscore {
        model.set_zscore(ZscoreStats::fit(data.train_frame.values())?)?;
    }
    Ok((data, model))
}

pub fn run_experiment(frame: &SeriesFrame, spec: &RunSpec) -> Result<RunResult, TrainError> {
    let (data, model) = prepare(frame, spec)?;
    if data.test.is_empty() {
        return Err(Error::contract("test partition is empty").into());
    }
    let outcome = train(model, &data.train, &data.val, &spec.train)?;
    let test = evaluate(&outcome.model, &data.test, spec.scales)?;
    let level_gap = level_gap(&outcome.model, &data.test)?;
    Ok(RunResult {
        outcome,
        test,
        level_gap,
        train_windows: data.train.len(),
        val_windows: data.val.len(),
        test_windows: data.test.len(),
    })
}
