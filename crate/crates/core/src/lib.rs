//! Learnable distribution coefficients for time-series forecasting.
//!
//! A pair of coefficient nets reads each lookback window: one estimates the
//! window's own level and scale (used to normalize the backbone input), the
//! other infers the level and scale of the upcoming horizon (used to map the
//! backbone output back to raw units). Everything here is `no_std` + `alloc`;
//! file formats and the command line live in the `dish-ts` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod backbone;
pub mod bench;
pub mod conet;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod params;
pub mod pipeline;
pub mod synthetic;
pub mod tape;
pub mod tensor;
pub mod training;

pub use backbone::{Backbone, BackboneKind, BackboneSpec};
pub use conet::{ConetParams, DistCoeffs, DualConet, InitStrategy, EPS_FLOOR};
pub use data::{SeriesFrame, SplitSpec, WindowPair};
pub use error::{Error, Result};
pub use params::{ParamId, ParamStore};
pub use pipeline::{DishModel, ModelConfig, NormMode};
pub use tape::{GradTape, Var};
pub use tensor::Tensor;
pub use training::{TrainConfig, TrainError};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent per-purpose seed from a run seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
