//! Normalize → forecast → denormalize wrapper around a backbone.
//!
//! In `Dish` mode the lookback is normalized with the back-net coefficients
//! and the backbone output is mapped back with the horizon-net coefficients:
//!
//! ```text
//! x̃ = (x − level_b) / scale_b
//! x̂ = scale_h · F(x̃) + level_h
//! ```
//!
//! The baseline modes reuse the same wrapper so that comparisons differ only in
//! how the coefficients are produced.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::backbone::{Backbone, BackboneKind, BackboneSpec};
use crate::conet::{self, CoeffVars, DistCoeffs, DualConet, InitStrategy, LinearConet, EPS_FLOOR};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tape::{GradTape, Var, DEFAULT_SLOPE};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormMode {
    /// Learned back/horizon coefficient nets.
    Dish,
    /// Per-window mean/std, reused for both normalization and denormalization.
    Revin,
    /// No normalization.
    None,
    /// Fixed per-series mean/std of the training partition.
    Zscore,
}

impl NormMode {
    pub const ALL: [NormMode; 4] = [NormMode::Dish, NormMode::Revin, NormMode::None, NormMode::Zscore];

    pub fn as_str(self) -> &'static str {
        match self {
            NormMode::Dish => "dish",
            NormMode::Revin => "revin",
            NormMode::None => "none",
            NormMode::Zscore => "zscore",
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dish" => Ok(NormMode::Dish),
            "revin" | "revin_baseline" => Ok(NormMode::Revin),
            "none" | "none_baseline" => Ok(NormMode::None),
            "zscore" | "zscore_baseline" => Ok(NormMode::Zscore),
            other => Err(Error::config(format!(
                "unknown mode `{other}` (expected dish, revin, none or zscore)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub series: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub backbone: BackboneKind,
    pub hidden: usize,
    pub mode: NormMode,
    pub init: InitStrategy,
    pub slope: f64,
}

impl ModelConfig {
    pub fn new(series: usize, lookback: usize, horizon: usize) -> Self {
        Self {
            series,
            lookback,
            horizon,
            backbone: BackboneKind::Linear,
            hidden: 32,
            mode: NormMode::Dish,
            init: InitStrategy::Avg,
            slope: DEFAULT_SLOPE,
        }
    }

    pub fn backbone_spec(&self) -> BackboneSpec {
        BackboneSpec {
            kind: self.backbone,
            hidden: self.hidden,
            series: self.series,
            lookback: self.lookback,
            horizon: self.horizon,
        }
    }
}

/// Per-series mean and population std of a training partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ZscoreStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZscoreStats {
    /// Statistics of a time-major `[T, N]` matrix; std is floored at [`EPS_FLOOR`].
    pub fn fit(values: &Tensor) -> Result<Self> {
        let (t, n) = (values.rows(), values.cols());
        if t == 0 {
            return Err(Error::contract("cannot fit z-score statistics on an empty partition"));
        }
        let mut mean = vec![0.0; n];
        let mut std = vec![0.0; n];
        for i in 0..n {
            let col = values.column(i);
            let m = col.iter().sum::<f64>() / t as f64;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / t as f64;
            mean[i] = m;
            std[i] = libm::sqrt(var).max(EPS_FLOOR);
        }
        Ok(Self { mean, std })
    }
}

/// A backbone wrapped with one normalization mode, plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DishModel {
    config: ModelConfig,
    store: ParamStore,
    dual: Option<DualConet>,
    backbone: Backbone,
    zscore: Option<ZscoreStats>,
}

/// Tape handles produced by one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    /// `[N, H]` denormalized forecast.
    pub forecast: Var,
    /// `[N]` horizon level coefficients (dish mode only).
    pub hori_level: Option<Var>,
}

/// Untracked output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `[H, N]` forecast in raw units.
    pub forecast: Tensor,
    pub hori_level: Option<Vec<f64>>,
}

impl DishModel {
    /// Builds a model with freshly initialized parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let dual = if config.mode == NormMode::Dish {
            let mut back =
                conet::init_params(config.series, config.lookback, config.init, crate::derive_seed(seed, 1))?;
            let mut hori =
                conet::init_params(config.series, config.lookback, config.init, crate::derive_seed(seed, 2))?;
            back.slope = config.slope;
            hori.slope = config.slope;
            Some(DualConet::register(&mut store, back, hori)?)
        } else {
            None
        };
        let backbone = Backbone::register(&mut store, config.backbone_spec(), crate::derive_seed(seed, 3))?;
        Ok(Self {
            config,
            store,
            dual,
            backbone,
            zscore: None,
        })
    }

    /// Reassembles a model from stored parameters (e.g. a checkpoint).
    pub fn from_parts(config: ModelConfig, store: ParamStore, zscore: Option<ZscoreStats>) -> Result<Self> {
        let dual = if config.mode == NormMode::Dish {
            let back = LinearConet::attach(&store, conet::BACK_WEIGHT, config.slope, config.init)?;
            let hori = LinearConet::attach(&store, conet::HORI_WEIGHT, config.slope, config.init)?;
            for net in [&back, &hori] {
                let shape = store.value(net.weight()).shape();
                if shape != [config.series, config.lookback] {
                    return Err(Error::ShapeMismatch {
                        op: "conet_attach",
                        lhs: vec![config.series, config.lookback],
                        rhs: shape.to_vec(),
                    });
                }
            }
            Some(DualConet { back, hori })
        } else {
            None
        };
        let backbone = Backbone::attach(&store, config.backbone_spec())?;
        let expected = dual.as_ref().map_or(0, |_| 2) + backbone.param_ids().len();
        if store.len() != expected {
            return Err(Error::contract(format!(
                "parameter set has {} tensors, model expects {expected}",
                store.len()
            )));
        }
        let model = Self {
            config,
            store,
            dual,
            backbone,
            zscore,
        };
        if config.mode == NormMode::Zscore {
            match &model.zscore {
                Some(z) if z.mean.len() == config.series && z.std.len() == config.series => {}
                _ => return Err(Error::contract("z-score mode needs statistics for every series")),
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn dual(&self) -> Option<&DualConet> {
        self.dual.as_ref()
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn zscore(&self) -> Option<&ZscoreStats> {
        self.zscore.as_ref()
    }

    pub fn set_zscore(&mut self, stats: ZscoreStats) -> Result<()> {
        if stats.mean.len() != self.config.series || stats.std.len() != self.config.series {
            return Err(Error::ShapeMismatch {
                op: "set_zscore",
                lhs: vec![self.config.series],
                rhs: vec![stats.mean.len()],
            });
        }
        self.zscore = Some(stats);
        Ok(())
    }

    /// Records one forward pass for a time-major `[L, N]` lookback.
    pub fn forward(&self, tape: &mut GradTape, lookback: &Tensor) -> Result<ForwardVars> {
        let ModelConfig {
            series,
            lookback: l,
            horizon,
            ..
        } = self.config;
        if lookback.shape() != [l, series] {
            return Err(Error::ShapeMismatch {
                op: "dish_forward",
                lhs: vec![l, series],
                rhs: lookback.shape().to_vec(),
            });
        }
        let window = tape.constant(conet::series_major(lookback)?)?;
        match self.config.mode {
            NormMode::None => {
                let forecast = self.backbone.forward(tape, &self.store, window)?;
                Ok(ForwardVars {
                    forecast,
                    hori_level: None,
                })
            }
            NormMode::Dish => {
                let dual = self.dual.as_ref().expect("dish mode carries coefficient nets");
                let (back, hori) = dual.forward(tape, &self.store, window)?;
                let forecast = self.wrap(tape, window, back, hori, horizon)?;
                Ok(ForwardVars {
                    forecast,
                    hori_level: Some(hori.level),
                })
            }
            NormMode::Revin => {
                let stats = instance_stats(tape, window)?;
                let forecast = self.wrap(tape, window, stats, stats, horizon)?;
                Ok(ForwardVars {
                    forecast,
                    hori_level: None,
                })
            }
            NormMode::Zscore => {
                let z = self
                    .zscore
                    .as_ref()
                    .ok_or_else(|| Error::contract("z-score mode used before fitting statistics"))?;
                let stats = CoeffVars {
                    level: tape.constant(Tensor::vector(z.mean.clone()))?,
                    scale: tape.constant(Tensor::vector(z.std.clone()))?,
                };
                let forecast = self.wrap(tape, window, stats, stats, horizon)?;
                Ok(ForwardVars {
                    forecast,
                    hori_level: None,
                })
            }
        }
    }

    fn wrap(&self, tape: &mut GradTape, window: Var, back: CoeffVars, hori: CoeffVars, horizon: usize) -> Result<Var> {
        let normalized = normalize_on_tape(tape, window, back, self.config.lookback)?;
        let raw = self.backbone.forward(tape, &self.store, normalized)?;
        denormalize_on_tape(tape, raw, hori, horizon)
    }

    /// Forecast for a time-major `[L, N]` lookback, as `[H, N]`.
    pub fn predict(&self, lookback: &Tensor) -> Result<Prediction> {
        let mut tape = GradTape::new();
        let out = self.forward(&mut tape, lookback)?;
        Ok(Prediction {
            forecast: tape.value(out.forecast).transpose()?,
            hori_level: out.hori_level.map(|v| tape.value(v).data().to_vec()),
        })
    }
}

/// Per-series window mean and floored population std, recorded on the tape.
fn instance_stats(tape: &mut GradTape, window: Var) -> Result<CoeffVars> {
    let steps = tape.value(window).shape()[1];
    let level = tape.mean_last(window)?;
    let wide = tape.expand_last(level, steps)?;
    let dev = tape.sub(window, wide)?;
    let sq = tape.square(dev)?;
    let var = tape.mean_last(sq)?;
    let std = tape.sqrt(var)?;
    let scale = tape.clamp_min(std, EPS_FLOOR)?;
    Ok(CoeffVars { level, scale })
}

fn normalize_on_tape(tape: &mut GradTape, window: Var, coeffs: CoeffVars, steps: usize) -> Result<Var> {
    let level = tape.expand_last(coeffs.level, steps)?;
    let scale = tape.expand_last(coeffs.scale, steps)?;
    let centred = tape.sub(window, level)?;
    tape.div(centred, scale)
}

fn denormalize_on_tape(tape: &mut GradTape, raw: Var, coeffs: CoeffVars, steps: usize) -> Result<Var> {
    let level = tape.expand_last(coeffs.level, steps)?;
    let scale = tape.expand_last(coeffs.scale, steps)?;
    let scaled = tape.mul(raw, scale)?;
    tape.add(scaled, level)
}

fn coeff_constants(tape: &mut GradTape, coeffs: &DistCoeffs, series: usize) -> Result<CoeffVars> {
    if coeffs.series() != series {
        return Err(Error::ShapeMismatch {
            op: "coefficients",
            lhs: vec![series],
            rhs: vec![coeffs.series()],
        });
    }
    Ok(CoeffVars {
        level: tape.constant(Tensor::vector(coeffs.level.clone()))?,
        scale: tape.constant(Tensor::vector(coeffs.scale.clone()))?,
    })
}

/// `(x − level) / scale` per series for a time-major `[L, N]` window.
pub fn normalize(lookback: &Tensor, back: &DistCoeffs) -> Result<Tensor> {
    let mut tape = GradTape::new();
    let x = tape.constant(conet::series_major(lookback)?)?;
    let c = coeff_constants(&mut tape, back, lookback.cols())?;
    let y = normalize_on_tape(&mut tape, x, c, lookback.rows())?;
    tape.value(y).transpose()
}

/// `scale · y + level` per series for a time-major `[H, N]` raw forecast.
pub fn denormalize(raw: &Tensor, hori: &DistCoeffs) -> Result<Tensor> {
    let mut tape = GradTape::new();
    let y = tape.constant(conet::series_major(raw)?)?;
    let c = coeff_constants(&mut tape, hori, raw.cols())?;
    let out = denormalize_on_tape(&mut tape, y, c, raw.rows())?;
    tape.value(out).transpose()
}

/// Full wrapped forward pass; see [`DishModel::predict`].
pub fn dish_forward(model: &DishModel, lookback: &Tensor) -> Result<Prediction> {
    model.predict(lookback)
}
