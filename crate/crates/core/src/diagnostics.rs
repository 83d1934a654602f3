//! Shift diagnostics and forecast metrics.
//!
//! Windows are summarized by per-series Gaussians (mean, population std) and
//! compared with the closed-form KL divergence. *Intra* distances compare
//! lookback windows at different anchors; *inter* distances compare each
//! lookback with its own horizon.

use alloc::vec;
use alloc::vec::Vec;

use crate::conet::EPS_FLOOR;
use crate::data::{make_windows, SeriesFrame, WindowPair};
use crate::error::{Error, Result};
use crate::pipeline::DishModel;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

/// Per-series mean and floored population std of a `[T, N]` window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl WindowStats {
    pub fn of(window: &Tensor) -> Self {
        let (t, n) = (window.rows(), window.cols());
        let mut mean = vec![0.0; n];
        let mut std = vec![0.0; n];
        for i in 0..n {
            let m = (0..t).map(|r| window.at(r, i)).sum::<f64>() / t as f64;
            let var = (0..t)
                .map(|r| (window.at(r, i) - m) * (window.at(r, i) - m))
                .sum::<f64>()
                / t as f64;
            mean[i] = m;
            std[i] = libm::sqrt(var).max(EPS_FLOOR);
        }
        Self { mean, std }
    }

    pub fn series(&self, i: usize) -> Gaussian {
        Gaussian {
            mean: self.mean[i],
            std: self.std[i],
        }
    }
}

/// `KL(N(μ₁, σ₁²) ‖ N(μ₂, σ₂²))`. Stds are floored at [`EPS_FLOOR`].
pub fn gaussian_kl(a: Gaussian, b: Gaussian) -> f64 {
    let (s1, s2) = (a.std.max(EPS_FLOOR), b.std.max(EPS_FLOOR));
    let d = a.mean - b.mean;
    let kl = libm::log(s2 / s1) + (s1 * s1 + d * d) / (2.0 * s2 * s2) - 0.5;
    // Rounding can leave tiny negatives for identical inputs.
    kl.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Divergence {
    /// `KL(first ‖ second)`: lookback → horizon, earlier → later anchor.
    #[default]
    Forward,
    /// Mean of both directions.
    Symmetric,
}

impl Divergence {
    fn between(self, a: Gaussian, b: Gaussian) -> f64 {
        match self {
            Divergence::Forward => gaussian_kl(a, b),
            Divergence::Symmetric => 0.5 * (gaussian_kl(a, b) + gaussian_kl(b, a)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub delta: f64,
    /// Number of evenly spaced anchors to sample (at least 2).
    pub anchors: usize,
    pub divergence: Divergence,
}

impl ShiftConfig {
    pub fn new(lookback: usize, horizon: usize) -> Self {
        Self {
            lookback,
            horizon,
            delta: 0.1,
            anchors: 32,
            divergence: Divergence::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftReport {
    /// Sampled anchors (first horizon row of each window), ascending.
    pub anchors: Vec<usize>,
    pub series: usize,
    pub delta: f64,
    /// Per series, an `[S, S]` matrix of distances between sampled lookbacks.
    pub intra: Vec<Tensor>,
    /// `[S, N]`: lookback-vs-horizon distance per anchor and series.
    pub inter: Tensor,
}

/// One inter-space exceedance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterFlag {
    pub anchor: usize,
    pub series: usize,
    pub distance: f64,
}

impl ShiftReport {
    pub fn inter_flags(&self) -> Vec<InterFlag> {
        let mut out = Vec::new();
        for (k, &anchor) in self.anchors.iter().enumerate() {
            for i in 0..self.series {
                let d = self.inter.at(k, i);
                if d > self.delta {
                    out.push(InterFlag {
                        anchor,
                        series: i,
                        distance: d,
                    });
                }
            }
        }
        out
    }

    /// `(anchor_u, anchor_v, series)` for every intra pair above the threshold, `u < v`.
    pub fn intra_flags(&self) -> Vec<(usize, usize, usize)> {
        let s = self.anchors.len();
        let mut out = Vec::new();
        for (i, m) in self.intra.iter().enumerate() {
            for u in 0..s {
                for v in (u + 1)..s {
                    if m.at(u, v) > self.delta {
                        out.push((self.anchors[u], self.anchors[v], i));
                    }
                }
            }
        }
        out
    }

    /// Same distances, new threshold.
    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..self.clone() }
    }
}

/// Evenly spaced anchors across the valid range, deduplicated.
fn sample_anchors(windows: &[WindowPair], count: usize) -> Vec<usize> {
    if windows.len() <= count {
        return (0..windows.len()).collect();
    }
    let span = windows.len() - 1;
    let mut picks: Vec<usize> = (0..count)
        .map(|k| ((k as f64 * span as f64) / (count - 1) as f64 + 0.5) as usize)
        .collect();
    picks.dedup();
    picks
}

pub fn shift_scan(frame: &SeriesFrame, cfg: &ShiftConfig) -> Result<ShiftReport> {
    if cfg.anchors < 2 {
        return Err(Error::config("shift scan needs at least two anchors"));
    }
    if cfg.delta.is_nan() || cfg.delta < 0.0 {
        return Err(Error::config("shift threshold must be ≥ 0"));
    }
    let windows = make_windows(frame, cfg.lookback, cfg.horizon, 1)?;
    let picks = sample_anchors(&windows, cfg.anchors);
    let n = frame.width();
    let back: Vec<WindowStats> = picks.iter().map(|&k| WindowStats::of(&windows[k].lookback)).collect();
    let hori: Vec<WindowStats> = picks.iter().map(|&k| WindowStats::of(&windows[k].horizon)).collect();
    let s = picks.len();

    let mut inter = Tensor::zeros(&[s, n]);
    for k in 0..s {
        for i in 0..n {
            inter.data_mut()[k * n + i] = cfg.divergence.between(back[k].series(i), hori[k].series(i));
        }
    }
    let intra = (0..n)
        .map(|i| {
            let mut m = Tensor::zeros(&[s, s]);
            for u in 0..s {
                for v in 0..s {
                    if u != v {
                        m.data_mut()[u * s + v] = cfg.divergence.between(back[u].series(i), back[v].series(i));
                    }
                }
            }
            m
        })
        .collect();
    Ok(ShiftReport {
        anchors: picks.iter().map(|&k| windows[k].anchor).collect(),
        series: n,
        delta: cfg.delta,
        intra,
        inter,
    })
}

/// Multipliers applied to reported errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricScales {
    pub mse: f64,
    pub mae: f64,
}

impl Default for MetricScales {
    fn default() -> Self {
        Self { mse: 1.0, mae: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub scaled_mse: f64,
    pub scaled_mae: f64,
}

pub fn eval_metrics(forecasts: &[f64], targets: &[f64], scales: MetricScales) -> Result<Metrics> {
    if forecasts.len() != targets.len() {
        return Err(Error::ShapeMismatch {
            op: "eval_metrics",
            lhs: vec![forecasts.len()],
            rhs: vec![targets.len()],
        });
    }
    if forecasts.is_empty() {
        return Err(Error::contract("metrics over an empty set"));
    }
    let count = forecasts.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, y) in forecasts.iter().zip(targets) {
        se += (p - y) * (p - y);
        ae += (p - y).abs();
    }
    let (mse, mae) = (se / count, ae / count);
    Ok(Metrics {
        mse,
        mae,
        scaled_mse: mse * scales.mse,
        scaled_mae: mae * scales.mae,
    })
}

/// Overall and per-series metrics of a model over a window set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub overall: Metrics,
    pub per_series: Vec<Metrics>,
}

pub fn evaluate(model: &DishModel, windows: &[WindowPair], scales: MetricScales) -> Result<Evaluation> {
    if windows.is_empty() {
        return Err(Error::contract("evaluation over an empty window set"));
    }
    let n = model.config().series;
    let mut all_p = Vec::new();
    let mut all_y = Vec::new();
    let mut per_p = vec![Vec::new(); n];
    let mut per_y = vec![Vec::new(); n];
    for w in windows {
        let p = model.predict(&w.lookback)?.forecast;
        all_p.extend_from_slice(p.data());
        all_y.extend_from_slice(w.horizon.data());
        for i in 0..n {
            per_p[i].extend(p.column(i));
            per_y[i].extend(w.horizon.column(i));
        }
    }
    let per_series = per_p
        .iter()
        .zip(&per_y)
        .map(|(p, y)| eval_metrics(p, y, scales))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        overall: eval_metrics(&all_p, &all_y, scales)?,
        per_series,
    })
}
