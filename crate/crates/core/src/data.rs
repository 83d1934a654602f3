//! Series frames, sliding windows and chronological splits.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMeta {
    pub source: Option<String>,
    pub freq: Option<String>,
    /// Known change points (row indices where a new regime starts), if generated.
    pub change_points: Vec<usize>,
}

/// `N` named series sharing `T` regular time steps, stored time-major `[T, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFrame {
    names: Vec<String>,
    values: Tensor,
    pub meta: FrameMeta,
}

impl SeriesFrame {
    pub fn new(names: Vec<String>, values: Tensor) -> Result<Self> {
        if values.rank() != 2 || values.cols() != names.len() {
            return Err(Error::ShapeMismatch {
                op: "series_frame",
                lhs: alloc::vec![values.rows(), names.len()],
                rhs: values.shape().to_vec(),
            });
        }
        if let Some(pos) = values.data().iter().position(|v| !v.is_finite()) {
            let n = names.len();
            return Err(Error::contract(format!(
                "non-finite value at row {}, column {}",
                pos / n,
                pos % n
            )));
        }
        Ok(Self {
            names,
            values,
            meta: FrameMeta::default(),
        })
    }

    pub fn with_meta(mut self, meta: FrameMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of series `N`.
    pub fn width(&self) -> usize {
        self.names.len()
    }

    /// Rows `start..end` as a new frame. Change points are re-based and filtered.
    pub fn slice(&self, start: usize, end: usize) -> SeriesFrame {
        let change_points = self
            .meta
            .change_points
            .iter()
            .filter(|&&c| c >= start && c < end)
            .map(|c| c - start)
            .collect();
        SeriesFrame {
            names: self.names.clone(),
            values: self.values.slice_rows(start, end),
            meta: FrameMeta {
                source: self.meta.source.clone(),
                freq: self.meta.freq.clone(),
                change_points,
            },
        }
    }
}

/// One aligned (lookback, horizon) sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPair {
    /// `[L, N]`, rows `anchor − L .. anchor`.
    pub lookback: Tensor,
    /// `[H, N]`, rows `anchor .. anchor + H`.
    pub horizon: Tensor,
    /// Index of the first horizon row in the source frame.
    pub anchor: usize,
}

pub fn window_count(t: usize, lookback: usize, horizon: usize, stride: usize) -> usize {
    if t < lookback + horizon || stride == 0 {
        0
    } else {
        (t - lookback - horizon) / stride + 1
    }
}

pub fn make_windows(frame: &SeriesFrame, lookback: usize, horizon: usize, stride: usize) -> Result<Vec<WindowPair>> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::config("windowing needs L ≥ 1, H ≥ 1 and stride ≥ 1"));
    }
    let t = frame.len();
    if t < lookback + horizon {
        return Err(Error::InsufficientLength { t, lookback, horizon });
    }
    let count = window_count(t, lookback, horizon, stride);
    let values = frame.values();
    Ok((0..count)
        .map(|k| {
            let anchor = lookback + k * stride;
            WindowPair {
                lookback: values.slice_rows(anchor - lookback, anchor),
                horizon: values.slice_rows(anchor, anchor + horizon),
                anchor,
            }
        })
        .collect())
}

/// Train/validation/test weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let spec = Self { train, val, test };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::config("split ratios must be finite and non-negative"));
        }
        if parts.iter().sum::<f64>() <= 0.0 {
            return Err(Error::config("split ratios must have a positive total"));
        }
        Ok(())
    }

    /// Row counts for a frame of length `t`; the rounding remainder goes to train.
    pub fn lengths(&self, t: usize) -> (usize, usize, usize) {
        let total = self.train + self.val + self.test;
        let part = |r: f64| libm::floor(t as f64 * r / total) as usize;
        let (val, test) = (part(self.val), part(self.test));
        (t - val - test, val, test)
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 7.0,
            val: 1.0,
            test: 2.0,
        }
    }
}

/// Contiguous, ordered train/val/test partitions.
pub fn chrono_split(frame: &SeriesFrame, spec: &SplitSpec) -> Result<(SeriesFrame, SeriesFrame, SeriesFrame)> {
    spec.validate()?;
    let (a, b, _) = spec.lengths(frame.len());
    Ok((
        frame.slice(0, a),
        frame.slice(a, a + b),
        frame.slice(a + b, frame.len()),
    ))
}

/// Windowed partitions. Windows never straddle a partition boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub train: Vec<WindowPair>,
    pub val: Vec<WindowPair>,
    pub test: Vec<WindowPair>,
    pub train_frame: SeriesFrame,
}

/// Splits first, then windows each partition with stride 1. Partitions with a
/// non-zero ratio must each yield at least one window.
pub fn build_datasets(frame: &SeriesFrame, spec: &SplitSpec, lookback: usize, horizon: usize) -> Result<Datasets> {
    let (train, val, test) = chrono_split(frame, spec)?;
    let windows = |part: &SeriesFrame, ratio: f64, name: &str| -> Result<Vec<WindowPair>> {
        if ratio == 0.0 {
            return Ok(Vec::new());
        }
        make_windows(part, lookback, horizon, 1).map_err(|e| match e {
            Error::InsufficientLength { t, .. } => Error::contract(format!(
                "{name} partition has {t} rows, needs at least L+H={}",
                lookback + horizon
            )),
            other => other,
        })
    };
    Ok(Datasets {
        train: windows(&train, spec.train, "train")?,
        val: windows(&val, spec.val, "validation")?,
        test: windows(&test, spec.test, "test")?,
        train_frame: train,
    })
}
