//! Plain-text model checkpoints.
//!
//! ```text
//! dish-checkpoint 1
//! series 2
//! lookback 8
//! horizon 4
//! backbone linear
//! hidden 32
//! mode dish
//! init avg
//! slope 1e-2
//! param conet.back.v 2 8
//! 1.25e-1 1.25e-1 ...
//! end
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a save/load
//! cycle is bit-exact. Z-score statistics, when present, are stored as
//! `zscore_mean` / `zscore_std` lines.

use std::fmt::Write as _;
use std::path::Path;

use dish_core::pipeline::ZscoreStats;
use dish_core::{DishModel, ModelConfig, ParamStore, Tensor};

use crate::csv_io::write_file;
use crate::error::{CliError, Result};
use crate::spec_file::read_text;

pub const MAGIC: &str = "dish-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

fn floats(xs: &[f64]) -> String {
    let mut s = String::with_capacity(xs.len() * 24);
    for (k, x) in xs.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        write!(s, "{x:e}").unwrap();
    }
    s
}

pub fn to_text(model: &DishModel) -> String {
    let c = model.config();
    let mut out = String::new();
    writeln!(out, "{MAGIC} {FORMAT_VERSION}").unwrap();
    writeln!(out, "series {}", c.series).unwrap();
    writeln!(out, "lookback {}", c.lookback).unwrap();
    writeln!(out, "horizon {}", c.horizon).unwrap();
    writeln!(out, "backbone {}", c.backbone).unwrap();
    writeln!(out, "hidden {}", c.hidden).unwrap();
    writeln!(out, "mode {}", c.mode).unwrap();
    writeln!(out, "init {}", c.init).unwrap();
    writeln!(out, "slope {:e}", c.slope).unwrap();
    if let Some(z) = model.zscore() {
        writeln!(out, "zscore_mean {}", floats(&z.mean)).unwrap();
        writeln!(out, "zscore_std {}", floats(&z.std)).unwrap();
    }
    for p in model.store().iter() {
        let dims: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        writeln!(out, "param {} {}", p.name, dims.join(" ")).unwrap();
        writeln!(out, "{}", floats(p.value.data())).unwrap();
    }
    out.push_str("end\n");
    out
}

pub fn save(path: &Path, model: &DishModel) -> Result<()> {
    write_file(path, to_text(model).as_bytes())
}

pub fn load(path: &Path) -> Result<DishModel> {
    from_text(&read_text(path)?, path)
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.iter.next() {
            Some((k, l)) => {
                self.line = k + 1;
                Ok(l.trim_end())
            }
            None => Err(self.err("unexpected end of checkpoint")),
        }
    }

    fn err(&self, msg: impl Into<String>) -> CliError {
        CliError::parse(self.path, self.line, 1, msg)
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(self.err(format!("expected `{key} …`, found `{l}`"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.keyed(key)?;
        v.parse().map_err(|_| self.err(format!("bad value `{v}` for `{key}`")))
    }

    fn floats(&self, text: &str) -> Result<Vec<f64>> {
        text.split_ascii_whitespace()
            .map(|t| match t.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(self.err(format!("bad number `{t}`"))),
            })
            .collect()
    }
}

pub fn from_text(text: &str, path: &Path) -> Result<DishModel> {
    let mut lines = Lines {
        path,
        iter: text.lines().enumerate(),
        line: 0,
    };
    let version: u32 = lines.parsed(MAGIC)?;
    if version != FORMAT_VERSION {
        return Err(lines.err(format!("unsupported checkpoint version {version}")));
    }
    let mut config = ModelConfig::new(
        lines.parsed("series")?,
        lines.parsed("lookback")?,
        lines.parsed("horizon")?,
    );
    let core = |e: dish_core::Error, l: &Lines| l.err(e.to_string());
    config.backbone = lines.keyed("backbone")?.parse().map_err(|e| core(e, &lines))?;
    config.hidden = lines.parsed("hidden")?;
    config.mode = lines.keyed("mode")?.parse().map_err(|e| core(e, &lines))?;
    config.init = lines.keyed("init")?.parse().map_err(|e| core(e, &lines))?;
    config.slope = lines.parsed("slope")?;

    let mut store = ParamStore::new();
    let mut zscore = ZscoreStats {
        mean: Vec::new(),
        std: Vec::new(),
    };
    let mut has_zscore = false;
    loop {
        let l = lines.next()?;
        let (key, rest) = l.split_once(' ').unwrap_or((l, ""));
        match key {
            "end" => break,
            "zscore_mean" => {
                zscore.mean = lines.floats(rest)?;
                has_zscore = true;
            }
            "zscore_std" => {
                zscore.std = lines.floats(rest)?;
                has_zscore = true;
            }
            "param" => {
                let mut parts = rest.split_ascii_whitespace();
                let name = parts.next().ok_or_else(|| lines.err("param line without a name"))?;
                let shape = parts
                    .map(|d| {
                        d.parse::<usize>()
                            .map_err(|_| lines.err(format!("bad dimension `{d}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let values = lines.next()?;
                let values = lines.floats(values)?;
                let t = Tensor::new(shape, values).map_err(|e| core(e, &lines))?;
                store.add(name, t).map_err(|e| core(e, &lines))?;
            }
            _ => return Err(lines.err(format!("unexpected line `{l}`"))),
        }
    }
    let zscore = has_zscore.then_some(zscore);
    Ok(DishModel::from_parts(config, store, zscore)?)
}
