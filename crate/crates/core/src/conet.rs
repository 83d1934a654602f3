//! Coefficient nets: map a lookback window to per-series level and scaling
//! coefficients.
//!
//! The linear instance computes, for each series `i` of an `L`-step window,
//!
//! ```text
//! level_i = leaky_relu(Σ_τ v[i,τ] · x[i,τ])
//! scale_i = max(sqrt(mean_τ (x[i,τ] − level_i)²), EPS_FLOOR)
//! ```
//!
//! so the scale is the root-mean-square deviation about the learned level
//! rather than about the sample mean. Gradients reach `v` through both terms.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{GradTape, Var, DEFAULT_SLOPE};
use crate::tensor::Tensor;

/// Lower bound applied to every scaling coefficient.
pub const EPS_FLOOR: f64 = 1e-8;

/// How the projection weights start out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitStrategy {
    /// Every weight `1/L`: the pre-activation is the window mean.
    Avg,
    /// Standard normal draws.
    Norm,
    /// Uniform draws in `[0, 1)`.
    Uniform,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 3] = [InitStrategy::Avg, InitStrategy::Norm, InitStrategy::Uniform];

    pub fn as_str(self) -> &'static str {
        match self {
            InitStrategy::Avg => "avg",
            InitStrategy::Norm => "norm",
            InitStrategy::Uniform => "uniform",
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(InitStrategy::Avg),
            "norm" => Ok(InitStrategy::Norm),
            "uniform" => Ok(InitStrategy::Uniform),
            other => Err(Error::config(format!(
                "unknown init strategy `{other}` (expected avg, norm or uniform)"
            ))),
        }
    }
}

/// Per-series level and scaling coefficients for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct DistCoeffs {
    pub level: Vec<f64>,
    pub scale: Vec<f64>,
}

impl DistCoeffs {
    pub fn new(level: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if level.len() != scale.len() {
            return Err(Error::ShapeMismatch {
                op: "dist_coeffs",
                lhs: alloc::vec![level.len()],
                rhs: alloc::vec![scale.len()],
            });
        }
        Ok(Self { level, scale })
    }

    /// `level = 0`, `scale = 1` for every series.
    pub fn neutral(series: usize) -> Self {
        Self {
            level: alloc::vec![0.0; series],
            scale: alloc::vec![1.0; series],
        }
    }

    pub fn series(&self) -> usize {
        self.level.len()
    }
}

/// Weights of a linear coefficient net: one `L`-long projection row per series.
#[derive(Debug, Clone, PartialEq)]
pub struct ConetParams {
    /// Shape `[N, L]`.
    pub v: Tensor,
    pub slope: f64,
    pub init: InitStrategy,
}

impl ConetParams {
    pub fn series(&self) -> usize {
        self.v.shape()[0]
    }

    pub fn lookback(&self) -> usize {
        self.v.shape()[1]
    }
}

pub fn init_params(series: usize, lookback: usize, strategy: InitStrategy, seed: u64) -> Result<ConetParams> {
    if series == 0 || lookback == 0 {
        return Err(Error::config("coefficient net needs N ≥ 1 and L ≥ 1"));
    }
    let len = series * lookback;
    let mut rng = crate::seeded_rng(seed);
    let data: Vec<f64> = match strategy {
        InitStrategy::Avg => alloc::vec![1.0 / lookback as f64; len],
        InitStrategy::Norm => (0..len).map(|_| StandardNormal.sample(&mut rng)).collect(),
        InitStrategy::Uniform => (0..len).map(|_| rng.random::<f64>()).collect(),
    };
    Ok(ConetParams {
        v: Tensor::new(alloc::vec![series, lookback], data)?,
        slope: DEFAULT_SLOPE,
        init: strategy,
    })
}

/// Tape handles for the coefficients of one window, each of shape `[N]`.
#[derive(Debug, Clone, Copy)]
pub struct CoeffVars {
    pub level: Var,
    pub scale: Var,
}

impl CoeffVars {
    pub fn read(&self, tape: &GradTape) -> DistCoeffs {
        DistCoeffs {
            level: tape.value(self.level).data().to_vec(),
            scale: tape.value(self.scale).data().to_vec(),
        }
    }
}

/// Anything that maps a series-major `[N, L]` window to coefficients.
///
/// The normalization pipeline only relies on this contract.
pub trait CoefficientNet {
    fn coefficients(&self, tape: &mut GradTape, store: &ParamStore, window: Var) -> Result<CoeffVars>;
}

/// The single-layer linear coefficient net.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConet {
    weight: ParamId,
    slope: f64,
    init: InitStrategy,
}

impl LinearConet {
    pub fn register(store: &mut ParamStore, name: &str, params: ConetParams) -> Result<Self> {
        let weight = store.add(name, params.v)?;
        Ok(Self {
            weight,
            slope: params.slope,
            init: params.init,
        })
    }

    /// Rebinds to a weight already present in `store`.
    pub fn attach(store: &ParamStore, name: &str, slope: f64, init: InitStrategy) -> Result<Self> {
        let weight = store
            .find(name)
            .ok_or_else(|| Error::contract(format!("missing parameter `{name}`")))?;
        if store.value(weight).rank() != 2 {
            return Err(Error::contract(format!("parameter `{name}` must be [N, L]")));
        }
        Ok(Self { weight, slope, init })
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn init(&self) -> InitStrategy {
        self.init
    }

    pub fn params(&self, store: &ParamStore) -> ConetParams {
        ConetParams {
            v: store.value(self.weight).clone(),
            slope: self.slope,
            init: self.init,
        }
    }
}

impl CoefficientNet for LinearConet {
    fn coefficients(&self, tape: &mut GradTape, store: &ParamStore, window: Var) -> Result<CoeffVars> {
        let v = tape.param(store, self.weight)?;
        let (wshape, xshape) = (store.value(self.weight).shape(), tape.value(window).shape());
        if wshape != xshape {
            return Err(Error::ShapeMismatch {
                op: "conet_forward",
                lhs: wshape.to_vec(),
                rhs: xshape.to_vec(),
            });
        }
        let lookback = xshape[1];
        let weighted = tape.mul(v, window)?;
        let pre = tape.sum_last(weighted)?;
        let level = tape.leaky_relu(pre, self.slope)?;
        let level_wide = tape.expand_last(level, lookback)?;
        let dev = tape.sub(window, level_wide)?;
        let sq = tape.square(dev)?;
        let var = tape.mean_last(sq)?;
        let rms = tape.sqrt(var)?;
        let scale = tape.clamp_min(rms, EPS_FLOOR)?;
        Ok(CoeffVars { level, scale })
    }
}

/// Back (lookback-space) and horizon-space coefficient nets reading the same window.
#[derive(Debug, Clone, PartialEq)]
pub struct DualConet {
    pub back: LinearConet,
    pub hori: LinearConet,
}

pub const BACK_WEIGHT: &str = "conet.back.v";
pub const HORI_WEIGHT: &str = "conet.hori.v";

impl DualConet {
    pub fn register(store: &mut ParamStore, back: ConetParams, hori: ConetParams) -> Result<Self> {
        if back.v.shape() != hori.v.shape() {
            return Err(Error::ShapeMismatch {
                op: "dual_conet",
                lhs: back.v.shape().to_vec(),
                rhs: hori.v.shape().to_vec(),
            });
        }
        Ok(Self {
            back: LinearConet::register(store, BACK_WEIGHT, back)?,
            hori: LinearConet::register(store, HORI_WEIGHT, hori)?,
        })
    }

    pub fn forward(&self, tape: &mut GradTape, store: &ParamStore, window: Var) -> Result<(CoeffVars, CoeffVars)> {
        let back = self.back.coefficients(tape, store, window)?;
        let hori = self.hori.coefficients(tape, store, window)?;
        Ok((back, hori))
    }
}

/// Transposes a time-major `[L, N]` window into the series-major `[N, L]` layout.
pub(crate) fn series_major(lookback: &Tensor) -> Result<Tensor> {
    if lookback.rank() != 2 {
        return Err(Error::contract("window must be a [steps, series] matrix"));
    }
    lookback.transpose()
}

/// Coefficients for one time-major `[L, N]` lookback window.
pub fn conet_forward(params: &ConetParams, lookback: &Tensor) -> Result<DistCoeffs> {
    let mut store = ParamStore::new();
    let net = LinearConet::register(&mut store, "v", params.clone())?;
    let mut tape = GradTape::new();
    let x = tape.constant(series_major(lookback)?)?;
    Ok(net.coefficients(&mut tape, &store, x)?.read(&tape))
}

/// Applies both nets to the same lookback window.
pub fn dual_forward(back: &ConetParams, hori: &ConetParams, lookback: &Tensor) -> Result<(DistCoeffs, DistCoeffs)> {
    let mut store = ParamStore::new();
    let dual = DualConet::register(&mut store, back.clone(), hori.clone())?;
    let mut tape = GradTape::new();
    let x = tape.constant(series_major(lookback)?)?;
    let (b, h) = dual.forward(&mut tape, &store, x)?;
    Ok((b.read(&tape), h.read(&tape)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn column(x: &[f64]) -> Tensor {
        Tensor::new(vec![x.len(), 1], x.to_vec()).unwrap()
    }

    fn params(v: &[f64]) -> ConetParams {
        ConetParams {
            v: Tensor::new(vec![1, v.len()], v.to_vec()).unwrap(),
            slope: 0.01,
            init: InitStrategy::Avg,
        }
    }

    #[test]
    fn zero_window_hits_the_floor() {
        let c = conet_forward(&params(&[0.3, -2.0, 5.0]), &column(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(c.level, vec![0.0]);
        assert_eq!(c.scale, vec![EPS_FLOOR]);
    }

    #[test]
    fn avg_weights_recover_mean_and_std() {
        let third = 1.0 / 3.0;
        let c = conet_forward(&params(&[third; 3]), &column(&[1.0, 2.0, 3.0])).unwrap();
        assert!((c.level[0] - 2.0).abs() < 1e-12);
        assert!((c.scale[0] - libm::sqrt(2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn negative_projection_goes_through_leaky_branch() {
        let third = -1.0 / 3.0;
        let c = conet_forward(&params(&[third; 3]), &column(&[1.0, 2.0, 3.0])).unwrap();
        assert!((c.level[0] + 0.02).abs() < 1e-12);
        let expected = libm::sqrt((1.02f64.powi(2) + 2.02f64.powi(2) + 3.02f64.powi(2)) / 3.0);
        assert!((c.scale[0] - expected).abs() < 1e-12);
        assert!((c.scale[0] - 2.178_777).abs() < 1e-6);
    }

    #[test]
    fn avg_init_is_one_over_lookback() {
        let p = init_params(2, 4, InitStrategy::Avg, 0).unwrap();
        assert!(p.v.data().iter().all(|&w| w == 0.25));
    }

    #[test]
    fn random_inits_are_seeded() {
        for s in [InitStrategy::Norm, InitStrategy::Uniform] {
            let a = init_params(2, 3, s, 42).unwrap();
            let b = init_params(2, 3, s, 42).unwrap();
            let c = init_params(2, 3, s, 43).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.v, c.v);
            assert_eq!(a.v.len(), 6);
        }
        let u = init_params(10, 50, InitStrategy::Uniform, 7).unwrap();
        assert!(u.v.data().iter().all(|&w| (0.0..1.0).contains(&w)));
    }

    #[test]
    fn norm_init_centres_on_zero() {
        let p = init_params(20, 500, InitStrategy::Norm, 3).unwrap();
        let mean = p.v.data().iter().sum::<f64>() / p.v.len() as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn unknown_strategy_is_config_error() {
        assert!(matches!("xavier".parse::<InitStrategy>(), Err(Error::Config(_))));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = params(&[0.5, 0.5]);
        assert!(matches!(
            conet_forward(&p, &column(&[1.0, 2.0, 3.0])),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn dual_with_identical_params_is_symmetric() {
        let p = init_params(1, 3, InitStrategy::Avg, 0).unwrap();
        let (b, h) = dual_forward(&p, &p, &column(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(b, h);
        assert!((b.level[0] - 2.0).abs() < 1e-12);
        assert!((b.scale[0] - 0.816_496_580_927_726).abs() < 1e-12);
        let (zb, zh) = dual_forward(&p, &p, &column(&[0.0; 3])).unwrap();
        assert_eq!((zb.level[0], zb.scale[0]), (0.0, EPS_FLOOR));
        assert_eq!(zb, zh);
    }
}
