//! TOML definitions for synthetic series and benchmark suites.
//!
//! Synthetic spec:
//!
//! ```toml
//! length = 2000
//! series = 4
//! seed = 0
//! noise = 1.0
//! series_offset = 2.0
//!
//! [[segment]]
//! start = 0
//! level = 5.0
//! scale = 1.0
//! ar = 0.5
//! ```
//!
//! A suite lists shared model/training settings and one `[[cell]]` per
//! synthetic dataset; each cell embeds its spec under `[cell.data]` with
//! `[[cell.data.segment]]` blocks.

use std::path::Path;

use dish_core::bench::{BenchCell, BenchSuite};
use dish_core::synthetic::{Segment, SyntheticSpec};
use dish_core::{BackboneKind, InitStrategy, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::parse_split;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentDef {
    pub start: usize,
    pub level: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub ar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDef {
    pub length: usize,
    pub series: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub noise: f64,
    #[serde(default)]
    pub series_offset: f64,
    #[serde(default, rename = "segment")]
    pub segments: Vec<SegmentDef>,
}

fn one() -> f64 {
    1.0
}

impl SyntheticDef {
    pub fn to_spec(&self) -> Result<SyntheticSpec> {
        let spec = SyntheticSpec {
            length: self.length,
            series: self.series,
            seed: self.seed,
            noise: self.noise,
            series_offset: self.series_offset,
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    start: s.start,
                    level: s.level,
                    scale: s.scale,
                    ar: s.ar,
                })
                .collect(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellDef {
    name: String,
    lookback: usize,
    horizon: usize,
    data: SyntheticDef,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteDef {
    name: String,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default = "default_modes")]
    modes: Vec<String>,
    #[serde(default = "default_backbone")]
    backbone: String,
    #[serde(default = "default_hidden")]
    hidden: usize,
    #[serde(default = "default_init")]
    init: String,
    #[serde(default = "default_split")]
    split: String,
    alpha: Option<f64>,
    lr: Option<f64>,
    batch: Option<usize>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    #[serde(rename = "cell")]
    cells: Vec<CellDef>,
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_modes() -> Vec<String> {
    ["dish", "none", "revin"].map(String::from).to_vec()
}

fn default_backbone() -> String {
    "linear".into()
}

fn default_hidden() -> usize {
    32
}

fn default_init() -> String {
    "avg".into()
}

fn default_split() -> String {
    "7:1:2".into()
}

impl SuiteDef {
    fn to_suite(&self) -> Result<BenchSuite> {
        let d = TrainConfig::default();
        let suite = BenchSuite {
            name: self.name.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| {
                    Ok(BenchCell {
                        name: c.name.clone(),
                        data: c.data.to_spec()?,
                        lookback: c.lookback,
                        horizon: c.horizon,
                    })
                })
                .collect::<Result<_>>()?,
            seeds: self.seeds.clone(),
            modes: self.modes.iter().map(|m| m.parse()).collect::<Result<_, _>>()?,
            backbone: self.backbone.parse::<BackboneKind>()?,
            hidden: self.hidden,
            init: self.init.parse::<InitStrategy>()?,
            split: parse_split(&self.split)?,
            train: TrainConfig {
                alpha: self.alpha.unwrap_or(d.alpha),
                lr: self.lr.unwrap_or(d.lr),
                batch_size: self.batch.unwrap_or(d.batch_size),
                max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
                patience: self.patience.unwrap_or(d.patience),
                seed: 0,
            },
        };
        suite.validate()?;
        Ok(suite)
    }
}

/// Deserializes TOML, mapping syntax and schema errors to `path:line:column`.
pub fn parse_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        CliError::parse(path, line, column, e.message().to_string())
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |k| before.len() - k - 1) + 1;
    (line, column)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

pub fn parse_synthetic(text: &str, path: &Path) -> Result<SyntheticSpec> {
    parse_toml::<SyntheticDef>(text, path)?.to_spec()
}

pub fn load_synthetic(path: &Path) -> Result<SyntheticSpec> {
    parse_synthetic(&read_text(path)?, path)
}

pub fn parse_suite(text: &str, path: &Path) -> Result<BenchSuite> {
    parse_toml::<SuiteDef>(text, path)?.to_suite()
}

pub fn load_suite(path: &Path) -> Result<BenchSuite> {
    parse_suite(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dish_core::NormMode;

    const SPEC: &str = r#"
length = 300
series = 2
seed = 9
noise = 0.5

[[segment]]
start = 0
level = 0.0
ar = 0.5

[[segment]]
start = 150
level = 10.0
scale = 2.0
"#;

    #[test]
    fn synthetic_spec_parses_with_defaults() {
        let s = parse_synthetic(SPEC, Path::new("s.toml")).unwrap();
        assert_eq!(
            (s.length, s.series, s.seed, s.noise, s.series_offset),
            (300, 2, 9, 0.5, 0.0)
        );
        assert_eq!(s.segments.len(), 2);
        assert_eq!(
            (s.segments[0].scale, s.segments[1].scale, s.segments[1].ar),
            (1.0, 2.0, 0.0)
        );
        assert_eq!(s.change_points(), [150]);
    }

    #[test]
    fn empty_schedule_and_typos_are_rejected() {
        assert!(parse_synthetic("length = 10\nseries = 1\n", Path::new("s.toml")).is_err());
        let err = parse_synthetic(&SPEC.replace("noise", "nosie"), Path::new("s.toml")).unwrap_err();
        assert!(err.to_string().starts_with("s.toml:5:"), "{err}");
    }

    #[test]
    fn suite_parses() {
        let text = format!(
            "name = \"demo\"\nseeds = [4]\nmodes = [\"dish\", \"none_baseline\"]\nmax_epochs = 3\n\n[[cell]]\nname = \"a\"\nlookback = 12\nhorizon = 6\n[cell.data]\n{}",
            SPEC.replace("[[segment]]", "[[cell.data.segment]]")
        );
        let suite = parse_suite(&text, Path::new("suite.toml")).unwrap();
        assert_eq!(suite.seeds, [4]);
        assert_eq!(suite.modes, [NormMode::Dish, NormMode::None]);
        assert_eq!(suite.train.max_epochs, 3);
        assert_eq!(suite.cells[0].data.segments.len(), 2);
    }
}
