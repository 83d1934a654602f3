//! Piecewise AR(1) generator with level and scale shifts.
//!
//! Each series follows `x_t = level + i·series_offset + scale · z_t` with
//! `z_t = ar · z_{t−1} + noise · ε_t`, where `level`, `scale` and `ar` come from
//! the segment containing `t`. The latent `z` carries across segment boundaries.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::data::{FrameMeta, SeriesFrame};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// First row of the segment.
    pub start: usize,
    pub level: f64,
    pub scale: f64,
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub length: usize,
    pub series: usize,
    pub seed: u64,
    /// Innovation standard deviation.
    pub noise: f64,
    /// Added to the level of series `i` as `i · series_offset`.
    pub series_offset: f64,
    pub segments: Vec<Segment>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::contract("synthetic schedule has no segments"));
        }
        if self.length == 0 || self.series == 0 {
            return Err(Error::config("synthetic series needs length ≥ 1 and series ≥ 1"));
        }
        if self.segments[0].start != 0 {
            return Err(Error::config("first segment must start at row 0"));
        }
        for pair in self.segments.windows(2) {
            if pair[1].start <= pair[0].start {
                return Err(Error::config("segment starts must be strictly increasing"));
            }
        }
        if let Some(last) = self.segments.last() {
            if last.start >= self.length {
                return Err(Error::config(format!(
                    "segment start {} is beyond the series length {}",
                    last.start, self.length
                )));
            }
        }
        for s in &self.segments {
            if !(s.level.is_finite() && s.scale.is_finite() && s.ar.is_finite()) || s.scale < 0.0 {
                return Err(Error::config("segment values must be finite with scale ≥ 0"));
            }
        }
        if !self.noise.is_finite() || self.noise < 0.0 || !self.series_offset.is_finite() {
            return Err(Error::config("noise must be finite and ≥ 0"));
        }
        Ok(())
    }

    /// Row indices where a segment other than the first begins.
    pub fn change_points(&self) -> Vec<usize> {
        self.segments.iter().skip(1).map(|s| s.start).collect()
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SeriesFrame> {
    spec.validate()?;
    let (t_len, n) = (spec.length, spec.series);
    let mut rng = crate::seeded_rng(spec.seed);
    let mut latent = alloc::vec![0.0f64; n];
    let mut data = Vec::with_capacity(t_len * n);
    let mut seg_idx = 0;
    for t in 0..t_len {
        while seg_idx + 1 < spec.segments.len() && spec.segments[seg_idx + 1].start <= t {
            seg_idx += 1;
        }
        let seg = spec.segments[seg_idx];
        for (i, z) in latent.iter_mut().enumerate() {
            let eps: f64 = StandardNormal.sample(&mut rng);
            *z = seg.ar * *z + spec.noise * eps;
            data.push(seg.level + i as f64 * spec.series_offset + seg.scale * *z);
        }
    }
    let names = (0..n).map(|i| format!("s{i}")).collect();
    let frame = SeriesFrame::new(names, Tensor::new(alloc::vec![t_len, n], data)?)?;
    Ok(frame.with_meta(FrameMeta {
        source: Some(format!("synthetic(seed={})", spec.seed)),
        freq: None,
        change_points: spec.change_points(),
    }))
}
