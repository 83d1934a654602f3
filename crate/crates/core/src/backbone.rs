//! Forecasting backbones operating on normalized, series-major windows.
//!
//! Every backbone maps `[N, L]` to `[N, H]` and treats series independently.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{GradTape, Var, DEFAULT_SLOPE};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackboneKind {
    /// Emits the last `H` lookback steps (persistence of the tail).
    Identity,
    /// Per-series affine map `H × L`.
    Linear,
    /// Two-layer leaky-ReLU network shared across series.
    Mlp,
}

impl BackboneKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneKind::Identity => "identity",
            BackboneKind::Linear => "linear",
            BackboneKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(BackboneKind::Identity),
            "linear" => Ok(BackboneKind::Linear),
            "mlp" => Ok(BackboneKind::Mlp),
            other => Err(Error::config(format!(
                "unknown backbone `{other}` (expected identity, linear or mlp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    /// Hidden width, used by `Mlp` only.
    pub hidden: usize,
    pub series: usize,
    pub lookback: usize,
    pub horizon: usize,
}

impl BackboneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.series == 0 || self.lookback == 0 || self.horizon == 0 {
            return Err(Error::config("backbone needs N, L, H ≥ 1"));
        }
        if self.kind == BackboneKind::Identity && self.horizon > self.lookback {
            return Err(Error::contract(format!(
                "identity backbone needs H ≤ L, got H={} L={}",
                self.horizon, self.lookback
            )));
        }
        if self.kind == BackboneKind::Mlp && self.hidden == 0 {
            return Err(Error::config("mlp backbone needs hidden ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layers {
    Identity,
    Linear {
        weight: ParamId,
        bias: ParamId,
    },
    Mlp {
        w1: ParamId,
        b1: ParamId,
        w2: ParamId,
        b2: ParamId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    spec: BackboneSpec,
    layers: Layers,
}

pub const LINEAR_WEIGHT: &str = "backbone.weight";
pub const LINEAR_BIAS: &str = "backbone.bias";
pub const MLP_W1: &str = "backbone.w1";
pub const MLP_B1: &str = "backbone.b1";
pub const MLP_W2: &str = "backbone.w2";
pub const MLP_B2: &str = "backbone.b2";

fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

impl Backbone {
    /// Creates fresh parameters in `store`.
    ///
    /// The linear map starts at the persistence forecast (every horizon step
    /// copies the last lookback step) plus N(0, 0.01²) noise. The MLP uses
    /// uniform fan-in initialization.
    pub fn register(store: &mut ParamStore, spec: BackboneSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let BackboneSpec {
            series: n,
            lookback: l,
            horizon: h,
            hidden,
            ..
        } = spec;
        let mut rng = crate::seeded_rng(seed);
        let layers = match spec.kind {
            BackboneKind::Identity => Layers::Identity,
            BackboneKind::Linear => {
                let noise = Normal::new(0.0, 0.01).expect("valid std");
                let mut w = Vec::with_capacity(n * h * l);
                for _ in 0..n * h {
                    for tau in 0..l {
                        let base = if tau + 1 == l { 1.0 } else { 0.0 };
                        w.push(base + noise.sample(&mut rng));
                    }
                }
                Layers::Linear {
                    weight: store.add(LINEAR_WEIGHT, Tensor::new(vec![n, h, l], w)?)?,
                    bias: store.add(LINEAR_BIAS, Tensor::zeros(&[n, h]))?,
                }
            }
            BackboneKind::Mlp => {
                let b_in = 1.0 / libm::sqrt(l as f64);
                let b_hid = 1.0 / libm::sqrt(hidden as f64);
                Layers::Mlp {
                    w1: store.add(MLP_W1, uniform_tensor(&[hidden, l], b_in, &mut rng))?,
                    b1: store.add(MLP_B1, uniform_tensor(&[hidden], b_in, &mut rng))?,
                    w2: store.add(MLP_W2, uniform_tensor(&[h, hidden], b_hid, &mut rng))?,
                    b2: store.add(MLP_B2, uniform_tensor(&[h], b_hid, &mut rng))?,
                }
            }
        };
        Ok(Self { spec, layers })
    }

    /// Rebinds to parameters already present in `store`, checking their shapes.
    pub fn attach(store: &ParamStore, spec: BackboneSpec) -> Result<Self> {
        spec.validate()?;
        let BackboneSpec {
            series: n,
            lookback: l,
            horizon: h,
            hidden,
            ..
        } = spec;
        let lookup = |name: &str, shape: &[usize]| -> Result<ParamId> {
            let id = store
                .find(name)
                .ok_or_else(|| Error::contract(format!("missing parameter `{name}`")))?;
            if store.value(id).shape() != shape {
                return Err(Error::ShapeMismatch {
                    op: "backbone_attach",
                    lhs: shape.to_vec(),
                    rhs: store.value(id).shape().to_vec(),
                });
            }
            Ok(id)
        };
        let layers = match spec.kind {
            BackboneKind::Identity => Layers::Identity,
            BackboneKind::Linear => Layers::Linear {
                weight: lookup(LINEAR_WEIGHT, &[n, h, l])?,
                bias: lookup(LINEAR_BIAS, &[n, h])?,
            },
            BackboneKind::Mlp => Layers::Mlp {
                w1: lookup(MLP_W1, &[hidden, l])?,
                b1: lookup(MLP_B1, &[hidden])?,
                w2: lookup(MLP_W2, &[h, hidden])?,
                b2: lookup(MLP_B2, &[h])?,
            },
        };
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        match self.layers {
            Layers::Identity => Vec::new(),
            Layers::Linear { weight, bias } => vec![weight, bias],
            Layers::Mlp { w1, b1, w2, b2 } => vec![w1, b1, w2, b2],
        }
    }

    /// `[N, L]` normalized window to `[N, H]` raw forecast.
    pub fn forward(&self, tape: &mut GradTape, store: &ParamStore, window: Var) -> Result<Var> {
        let BackboneSpec {
            series: n,
            lookback: l,
            horizon: h,
            ..
        } = self.spec;
        let got = tape.value(window).shape();
        if got != [n, l] {
            return Err(Error::ShapeMismatch {
                op: "backbone_forward",
                lhs: vec![n, l],
                rhs: got.to_vec(),
            });
        }
        match self.layers {
            Layers::Identity => {
                let selector = tape.constant(tail_selector(l, h))?;
                tape.matvec(selector, window)
            }
            Layers::Linear { weight, bias } => {
                let w = tape.param(store, weight)?;
                let b = tape.param(store, bias)?;
                let y = tape.matvec(w, window)?;
                tape.add(y, b)
            }
            Layers::Mlp { w1, b1, w2, b2 } => {
                let w1 = tape.param(store, w1)?;
                let b1 = tape.param(store, b1)?;
                let w2 = tape.param(store, w2)?;
                let b2 = tape.param(store, b2)?;
                let z = tape.matvec(w1, window)?;
                let b1 = tape.expand_first(b1, n)?;
                let z = tape.add(z, b1)?;
                let a = tape.leaky_relu(z, DEFAULT_SLOPE)?;
                let y = tape.matvec(w2, a)?;
                let b2 = tape.expand_first(b2, n)?;
                tape.add(y, b2)
            }
        }
    }
}

/// `[H, L]` 0/1 matrix selecting the last `H` of `L` steps.
fn tail_selector(lookback: usize, horizon: usize) -> Tensor {
    let mut s = Tensor::zeros(&[horizon, lookback]);
    let offset = lookback - horizon;
    for r in 0..horizon {
        s.data_mut()[r * lookback + offset + r] = 1.0;
    }
    s
}

/// Runs a backbone on a time-major `[L, N]` normalized lookback and returns `[H, N]`.
pub fn backbone_forward(backbone: &Backbone, store: &ParamStore, normalized: &Tensor) -> Result<Tensor> {
    let mut tape = GradTape::new();
    let x = tape.constant(crate::conet::series_major(normalized)?)?;
    let y = backbone.forward(&mut tape, store, x)?;
    tape.value(y).transpose()
}
