//! Run configuration: defaults, then command-line flags, then a config file.
//!
//! A value set in the config file wins over the same flag, and a flag wins
//! over the built-in default. The resolved configuration is written next to
//! every run's outputs as `config.toml`, which is itself a valid config file.

use std::path::{Path, PathBuf};

use dish_core::diagnostics::{Divergence, MetricScales, ShiftConfig};
use dish_core::experiment::RunSpec;
use dish_core::tape::DEFAULT_SLOPE;
use dish_core::{BackboneKind, InitStrategy, ModelConfig, NormMode, SplitSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::spec_file::{parse_toml, read_text};

/// Every setting a run may take, all optional. Used for both flags and files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub drop_timestamp: Option<bool>,
    pub synthetic_spec: Option<PathBuf>,
    pub lookback: Option<usize>,
    pub horizon: Option<usize>,
    pub split: Option<String>,
    pub backbone: Option<String>,
    pub hidden: Option<usize>,
    pub mode: Option<String>,
    pub init: Option<String>,
    pub alpha: Option<f64>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub scale_mse: Option<f64>,
    pub scale_mae: Option<f64>,
    pub out: Option<PathBuf>,
    pub delta: Option<f64>,
    pub anchors: Option<usize>,
    pub divergence: Option<String>,
    pub sweep_axis: Option<String>,
    pub sweep_values: Option<Vec<String>>,
    /// Written into resolved configs; ignored on input.
    pub tool_version: Option<String>,
}

impl Overrides {
    pub fn load(path: &Path) -> Result<Self> {
        parse_toml(&read_text(path)?, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Alpha,
    Lookback,
    Horizon,
    Init,
}

impl std::str::FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepAxis::Alpha),
            "lookback" => Ok(SweepAxis::Lookback),
            "horizon" => Ok(SweepAxis::Horizon),
            "init" => Ok(SweepAxis::Init),
            other => Err(CliError::invalid(format!(
                "unknown sweep axis `{other}` (expected alpha, lookback, horizon or init)"
            ))),
        }
    }
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Alpha => "alpha",
            SweepAxis::Lookback => "lookback",
            SweepAxis::Horizon => "horizon",
            SweepAxis::Init => "init",
        }
    }

    /// Grid used when no values are given.
    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            SweepAxis::Alpha => &["0", "0.25", "0.5", "0.75", "1"],
            SweepAxis::Lookback => &["48", "96", "144", "192", "240"],
            SweepAxis::Horizon => &["24", "48", "96", "168"],
            SweepAxis::Init => &["avg", "norm", "uniform"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub drop_timestamp: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic_spec: Option<PathBuf>,
    pub lookback: usize,
    pub horizon: usize,
    pub split: String,
    pub backbone: String,
    pub hidden: usize,
    pub mode: String,
    pub init: String,
    pub alpha: f64,
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub scale_mse: f64,
    pub scale_mae: f64,
    pub out: PathBuf,
    pub delta: f64,
    pub anchors: usize,
    pub divergence: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_axis: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_values: Option<Vec<String>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            data: None,
            drop_timestamp: false,
            synthetic_spec: None,
            lookback: 96,
            horizon: 24,
            split: "7:1:2".into(),
            backbone: BackboneKind::Linear.to_string(),
            hidden: 32,
            mode: NormMode::Dish.to_string(),
            init: InitStrategy::Avg.to_string(),
            alpha: t.alpha,
            lr: t.lr,
            batch: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            scale_mse: 1.0,
            scale_mae: 1.0,
            out: PathBuf::from("dish-out"),
            delta: 0.1,
            anchors: 32,
            divergence: "forward".into(),
            sweep_axis: None,
            sweep_values: None,
        }
    }
}

macro_rules! apply {
    ($cfg:ident, $o:ident; $($field:ident),*; $($opt:ident),*) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
        $(if $o.$opt.is_some() { $cfg.$opt = $o.$opt.clone(); })*
    };
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        apply!(self, o;
            drop_timestamp, lookback, horizon, split, backbone, hidden, mode, init, alpha, lr, batch,
            max_epochs, patience, seed, scale_mse, scale_mae, out, delta, anchors, divergence;
            data, synthetic_spec, sweep_axis, sweep_values);
        // A source given at one layer replaces the other kind of source from a lower layer.
        if o.data.is_some() && o.synthetic_spec.is_none() {
            self.synthetic_spec = None;
        }
        if o.synthetic_spec.is_some() && o.data.is_none() {
            self.data = None;
        }
    }

    /// Defaults, then `flags`, then the file at `config` (if any); validated.
    pub fn resolve(flags: &Overrides, config: Option<&Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(flags);
        if let Some(path) = config {
            cfg.apply(&Overrides::load(path)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synthetic_spec) {
            (Some(_), Some(_)) => return Err(CliError::invalid("give either --data or --synthetic-spec, not both")),
            (None, None) => return Err(CliError::invalid("no data source: pass --data or --synthetic-spec")),
            _ => {}
        }
        let spec = self.run_spec()?;
        spec.model.backbone_spec().validate()?;
        if spec.model.lookback == 0 || spec.model.horizon == 0 {
            return Err(CliError::invalid("lookback and horizon must be ≥ 1"));
        }
        if spec.model.backbone == BackboneKind::Mlp && spec.model.hidden == 0 {
            return Err(CliError::invalid("mlp backbone needs hidden ≥ 1"));
        }
        let scales = [self.scale_mse, self.scale_mae];
        if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(CliError::invalid("metric scales must be finite and > 0"));
        }
        self.shift_config()?;
        if let Some(axis) = &self.sweep_axis {
            axis.parse::<SweepAxis>()?;
        }
        Ok(())
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut m = ModelConfig::new(1, self.lookback, self.horizon);
        m.backbone = self.backbone.parse()?;
        m.hidden = self.hidden;
        m.mode = self.mode.parse()?;
        m.init = self.init.parse()?;
        m.slope = DEFAULT_SLOPE;
        Ok(m)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = TrainConfig {
            alpha: self.alpha,
            lr: self.lr,
            batch_size: self.batch,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn run_spec(&self) -> Result<RunSpec> {
        Ok(RunSpec {
            model: self.model_config()?,
            split: parse_split(&self.split)?,
            train: self.train_config()?,
            scales: MetricScales {
                mse: self.scale_mse,
                mae: self.scale_mae,
            },
        })
    }

    pub fn shift_config(&self) -> Result<ShiftConfig> {
        let divergence = match self.divergence.as_str() {
            "forward" => Divergence::Forward,
            "symmetric" => Divergence::Symmetric,
            other => {
                return Err(CliError::invalid(format!(
                    "unknown divergence `{other}` (expected forward or symmetric)"
                )))
            }
        };
        if self.delta.is_nan() || self.delta < 0.0 {
            return Err(CliError::invalid("delta must be ≥ 0"));
        }
        if self.anchors < 2 {
            return Err(CliError::invalid("anchors must be ≥ 2"));
        }
        Ok(ShiftConfig {
            lookback: self.lookback,
            horizon: self.horizon,
            delta: self.delta,
            anchors: self.anchors,
            divergence,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// `"7:1:2"` (or comma-separated) into a validated split.
pub fn parse_split(s: &str) -> Result<SplitSpec> {
    let parts: Vec<&str> = s.split([':', ',']).map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::invalid(format!(
            "split `{s}` must have three ratios, e.g. 7:1:2"
        )));
    }
    let mut r = [0.0; 3];
    for (slot, p) in r.iter_mut().zip(&parts) {
        *slot = p
            .parse()
            .map_err(|_| CliError::invalid(format!("split ratio `{p}` is not a number")))?;
    }
    Ok(SplitSpec::new(r[0], r[1], r[2])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Overrides {
        Overrides {
            data: Some("a.csv".into()),
            lookback: Some(12),
            alpha: Some(0.25),
            ..Overrides::default()
        }
    }

    #[test]
    fn config_file_beats_flags_beats_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "alpha = 0.75\nhorizon = 6\n").unwrap();
        let cfg = RunConfig::resolve(&flags(), Some(&path)).unwrap();
        assert_eq!(cfg.alpha, 0.75);
        assert_eq!(cfg.horizon, 6);
        assert_eq!(cfg.lookback, 12);
        assert_eq!(cfg.patience, 7);
        assert_eq!(cfg.data.as_deref(), Some(Path::new("a.csv")));
    }

    #[test]
    fn file_source_replaces_flag_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "synthetic_spec = \"s.toml\"\n").unwrap();
        let cfg = RunConfig::resolve(&flags(), Some(&path)).unwrap();
        assert_eq!(cfg.data, None);
        assert_eq!(cfg.synthetic_spec.as_deref(), Some(Path::new("s.toml")));
    }

    #[test]
    fn resolved_config_reloads_to_itself() {
        let cfg = RunConfig::resolve(&flags(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        std::fs::write(&path, cfg.to_toml()).unwrap();
        assert_eq!(RunConfig::resolve(&Overrides::default(), Some(&path)).unwrap(), cfg);
    }

    #[test]
    fn invalid_settings_fail_before_work() {
        let bad = |o: Overrides| RunConfig::resolve(&o, None).is_err();
        assert!(bad(Overrides::default()));
        assert!(bad(Overrides {
            mode: Some("batchnorm".into()),
            ..flags()
        }));
        assert!(bad(Overrides {
            alpha: Some(-1.0),
            ..flags()
        }));
        assert!(bad(Overrides {
            split: Some("7:1".into()),
            ..flags()
        }));
        assert!(bad(Overrides {
            backbone: Some("identity".into()),
            horizon: Some(20),
            ..flags()
        }));
        assert!(bad(Overrides {
            synthetic_spec: Some("s.toml".into()),
            ..flags()
        }));
    }

    #[test]
    fn split_strings() {
        assert_eq!(parse_split("6:2:2").unwrap().lengths(100), (60, 20, 20));
        assert_eq!(parse_split("7, 1, 2").unwrap().lengths(100), (70, 10, 20));
        assert!(parse_split("a:b:c").is_err());
    }
}
