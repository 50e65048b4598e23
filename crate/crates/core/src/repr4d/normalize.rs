use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repr4d::Sample4D;

/// Lower bound on fitted standard deviations.
pub const STD_FLOOR: f32 = 1e-6;

/// Per-feature-slot z-score over electrode cells; padding cells are left at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
    /// Row-major electrode occupancy of the grid.
    pub mask: Vec<bool>,
}

/// Fit slot statistics on `train` only, pooling the cells flagged in `mask`
/// (row-major electrode occupancy), samples and temporal slices.
pub fn fit_normalizer(train: &[Sample4D], mask: &[bool]) -> Result<Normalizer> {
    let first = train
        .first()
        .ok_or_else(|| Error::Data("cannot fit a normalizer on zero samples".into()))?;
    let [h, w, depth, slices] = first.dims;
    if h * w != mask.len() {
        return Err(Error::shape(format!("sample grid {h}x{w} against a {}-cell mask", mask.len())));
    }
    if !mask.contains(&true) {
        return Err(Error::Data("normalizer mask selects no cells".into()));
    }
    let mut sum = vec![0f64; depth];
    let mut sq = vec![0f64; depth];
    let mut count = 0usize;
    for s in train {
        if s.dims != first.dims {
            return Err(Error::shape(format!("mixed sample dims {:?} and {:?}", s.dims, first.dims)));
        }
        for (cell, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            let base = cell * depth * slices;
            for k in 0..depth {
                for &v in &s.values[base + k * slices..base + (k + 1) * slices] {
                    sum[k] += v as f64;
                    sq[k] += (v as f64) * (v as f64);
                }
            }
        }
        count += mask.iter().filter(|&&m| m).count() * slices;
    }
    let n = count as f64;
    let mean: Vec<f32> = sum.iter().map(|s| (s / n) as f32).collect();
    let std = sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| {
            let m = s / n;
            ((q / n - m * m).max(0.0).sqrt() as f32).max(STD_FLOOR)
        })
        .collect();
    Ok(Normalizer { mean, std, mask: mask.to_vec() })
}

impl Normalizer {
    pub fn depth(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, sample: &Sample4D) -> Result<Sample4D> {
        let [h, w, depth, slices] = sample.dims;
        if depth != self.depth() || h * w != self.mask.len() {
            return Err(Error::shape(format!(
                "normalizer for depth {} on {} cells applied to {:?}",
                self.depth(),
                self.mask.len(),
                sample.dims
            )));
        }
        let mut out = sample.clone();
        for (cell, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            let base = cell * depth * slices;
            for k in 0..depth {
                for v in &mut out.values[base + k * slices..base + (k + 1) * slices] {
                    *v = (*v - self.mean[k]) / self.std[k];
                }
            }
        }
        Ok(out)
    }
}

pub fn normalize(sample: &Sample4D, norm: &Normalizer) -> Result<Sample4D> {
    norm.normalize(sample)
}
