use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repr4d::Sample4D;

/// Which half of the feature axis a model consumes. DE occupies the first
/// half of the feature axis, mean power the second.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    De,
    Psd,
    #[default]
    Both,
}

impl FeatureMode {
    /// Output depth for an input of `depth` features.
    pub fn depth(self, depth: usize) -> usize {
        match self {
            FeatureMode::Both => depth,
            _ => depth / 2,
        }
    }

    fn range(self, depth: usize) -> std::ops::Range<usize> {
        match self {
            FeatureMode::De => 0..depth / 2,
            FeatureMode::Psd => depth / 2..depth,
            FeatureMode::Both => 0..depth,
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::De => "de",
            FeatureMode::Psd => "psd",
            FeatureMode::Both => "both",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "de" => Ok(FeatureMode::De),
            "psd" => Ok(FeatureMode::Psd),
            "both" => Ok(FeatureMode::Both),
            other => Err(Error::Config(format!("unknown feature mode {other:?} (de, psd, both)"))),
        }
    }
}

/// Restrict a sample to `mode`'s features. Slicing drops the other half;
/// with `zero_fill` the depth is kept and the other half is zeroed instead.
pub fn feature_subset(sample: &Sample4D, mode: FeatureMode, zero_fill: bool) -> Result<Sample4D> {
    let [h, w, depth, slices] = sample.dims;
    if depth % 2 != 0 {
        return Err(Error::shape(format!("feature depth {depth} is not split into DE and PSD halves")));
    }
    let keep = mode.range(depth);
    if zero_fill {
        let mut out = sample.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            if !keep.contains(&((i / slices) % depth)) {
                *v = 0.0;
            }
        }
        return Ok(out);
    }
    let mut out = Sample4D::zeros([h, w, keep.len(), slices], sample.label);
    out.subject = sample.subject;
    out.experiment = sample.experiment;
    let block = keep.len() * slices;
    for cell in 0..h * w {
        let src = (cell * depth + keep.start) * slices;
        out.values[cell * block..(cell + 1) * block].copy_from_slice(&sample.values[src..src + block]);
    }
    Ok(out)
}
