//! Multi-seed comparison of normalization modes on synthetic suites.
//!
//! Within a cell every mode sees the same generated frame and the same window
//! order for a given seed, so the normalization mode is the only variable.
//! Improvement of dish over a baseline is `1 − MSE(dish) / MSE(baseline)` on
//! seed-averaged test MSE.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::backbone::BackboneKind;
use crate::conet::InitStrategy;
use crate::data::SplitSpec;
use crate::diagnostics::MetricScales;
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, RunSpec};
use crate::pipeline::{ModelConfig, NormMode};
use crate::synthetic::{gen_synthetic, SyntheticSpec};
use crate::tape::DEFAULT_SLOPE;
use crate::training::{TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub name: String,
    /// Generator spec; its seed is replaced by each suite seed.
    pub data: SyntheticSpec,
    pub lookback: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSuite {
    pub name: String,
    pub cells: Vec<BenchCell>,
    pub seeds: Vec<u64>,
    pub modes: Vec<NormMode>,
    pub backbone: BackboneKind,
    pub hidden: usize,
    pub init: InitStrategy,
    pub split: SplitSpec,
    /// `seed` is replaced by each suite seed.
    pub train: TrainConfig,
}

impl BenchSuite {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.modes.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("suite needs at least one cell, mode and seed"));
        }
        for c in &self.cells {
            c.data.validate()?;
        }
        self.split.validate()?;
        self.train.validate()
    }

    fn run_spec(&self, cell: &BenchCell, mode: NormMode, seed: u64) -> RunSpec {
        RunSpec {
            model: ModelConfig {
                series: cell.data.series,
                lookback: cell.lookback,
                horizon: cell.horizon,
                backbone: self.backbone,
                hidden: self.hidden,
                mode,
                init: self.init,
                slope: DEFAULT_SLOPE,
            },
            split: self.split,
            train: TrainConfig { seed, ..self.train },
            scales: MetricScales::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    Diverged(String),
    Failed(String),
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Ok)
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Diverged(_) => "diverged",
            RunStatus::Failed(_) => "failed",
        }
    }
}

/// One (cell, mode, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub cell: String,
    pub mode: NormMode,
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
    pub level_gap: Option<f64>,
    pub epochs: usize,
    pub best_epoch: usize,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub cell: String,
    pub mode: NormMode,
    /// Runs included in the aggregate.
    pub runs: usize,
    pub excluded: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Improvement {
    pub cell: String,
    pub baseline: NormMode,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<CellSummary>,
    pub improvements: Vec<Improvement>,
}

/// Runs every (cell, seed, mode) combination and aggregates.
pub fn run_suite(suite: &BenchSuite) -> Result<SuiteReport> {
    run_suite_with(suite, |_| {})
}

/// As [`run_suite`], calling `on_run` after each finished run.
pub fn run_suite_with(suite: &BenchSuite, mut on_run: impl FnMut(&RunRecord)) -> Result<SuiteReport> {
    suite.validate()?;
    let mut runs = Vec::new();
    for cell in &suite.cells {
        for &seed in &suite.seeds {
            let frame = gen_synthetic(&SyntheticSpec {
                seed,
                ..cell.data.clone()
            })?;
            for &mode in &suite.modes {
                let spec = suite.run_spec(cell, mode, seed);
                let record = match run_experiment(&frame, &spec) {
                    Ok(r) => RunRecord {
                        cell: cell.name.clone(),
                        mode,
                        seed,
                        mse: r.test.overall.mse,
                        mae: r.test.overall.mae,
                        level_gap: r.level_gap,
                        epochs: r.outcome.history.records.len(),
                        best_epoch: r.outcome.best_epoch,
                        status: RunStatus::Ok,
                    },
                    Err(e) => {
                        let status = match &e {
                            TrainError::Diverged { .. } => RunStatus::Diverged(e.to_string()),
                            TrainError::Core(_) => RunStatus::Failed(e.to_string()),
                        };
                        RunRecord {
                            cell: cell.name.clone(),
                            mode,
                            seed,
                            mse: f64::NAN,
                            mae: f64::NAN,
                            level_gap: None,
                            epochs: 0,
                            best_epoch: 0,
                            status,
                        }
                    }
                };
                on_run(&record);
                runs.push(record);
            }
        }
    }
    let (summary, improvements) = aggregate(&runs);
    Ok(SuiteReport {
        runs,
        summary,
        improvements,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

/// Summaries (population std across seeds) and dish improvements, from run
/// records alone. Cells and modes keep first-appearance order.
pub fn aggregate(runs: &[RunRecord]) -> (Vec<CellSummary>, Vec<Improvement>) {
    let mut keys: Vec<(String, NormMode)> = Vec::new();
    for r in runs {
        if !keys.iter().any(|(c, m)| *c == r.cell && *m == r.mode) {
            keys.push((r.cell.clone(), r.mode));
        }
    }
    let summary: Vec<CellSummary> = keys
        .iter()
        .map(|(cell, mode)| {
            let group: Vec<&RunRecord> = runs.iter().filter(|r| r.cell == *cell && r.mode == *mode).collect();
            let ok: Vec<&&RunRecord> = group.iter().filter(|r| r.status.is_ok()).collect();
            let mse: Vec<f64> = ok.iter().map(|r| r.mse).collect();
            let mae: Vec<f64> = ok.iter().map(|r| r.mae).collect();
            let (mse_mean, mse_std) = mean_std(&mse);
            let (mae_mean, mae_std) = mean_std(&mae);
            CellSummary {
                cell: cell.clone(),
                mode: *mode,
                runs: ok.len(),
                excluded: group.len() - ok.len(),
                mse_mean,
                mse_std,
                mae_mean,
                mae_std,
            }
        })
        .collect();

    let mut improvements = Vec::new();
    for s in summary.iter().filter(|s| s.mode == NormMode::Dish) {
        for baseline in [NormMode::None, NormMode::Revin] {
            if let Some(b) = summary.iter().find(|b| b.cell == s.cell && b.mode == baseline) {
                improvements.push(Improvement {
                    cell: s.cell.clone(),
                    baseline,
                    ratio: 1.0 - s.mse_mean / b.mse_mean,
                });
            }
        }
    }
    (summary, improvements)
}

impl core::fmt::Display for Improvement {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "{}: dish vs {} {:+.1}%",
            self.cell,
            self.baseline,
            100.0 * self.ratio
        )
    }
}
