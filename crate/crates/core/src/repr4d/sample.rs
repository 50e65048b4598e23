use crate::error::{Error, Result};
use crate::repr4d::ElectrodeLayout;
use crate::sigproc::FeatureTensor;

/// Emotion classes in file-format order.
pub const CLASS_NAMES: [&str; 3] = ["negative", "neutral", "positive"];

/// Spatial-spectral-temporal sample `[h × w × depth × slices]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample4D {
    pub values: Vec<f32>,
    /// `(h, w, depth, slices)`.
    pub dims: [usize; 4],
    pub label: u32,
    pub subject: u32,
    pub experiment: u32,
}

impl Sample4D {
    pub fn zeros(dims: [usize; 4], label: u32) -> Self {
        Self {
            values: vec![0.0; dims.iter().product()],
            dims,
            label,
            subject: 0,
            experiment: 0,
        }
    }

    pub fn height(&self) -> usize {
        self.dims[0]
    }

    pub fn width(&self) -> usize {
        self.dims[1]
    }

    pub fn depth(&self) -> usize {
        self.dims[2]
    }

    pub fn slices(&self) -> usize {
        self.dims[3]
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, feature: usize, slice: usize) -> usize {
        let [_, w, d, t] = self.dims;
        ((row * w + col) * d + feature) * t + slice
    }

    pub fn get(&self, row: usize, col: usize, feature: usize, slice: usize) -> f32 {
        self.values[self.index(row, col, feature, slice)]
    }

    /// Temporal slice `[h × w × depth]`, row-major.
    pub fn slice(&self, t: usize) -> Vec<f32> {
        let step = self.slices();
        self.values.iter().skip(t).step_by(step).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Scatter per-channel features onto the layout's grid; unoccupied cells
/// stay zero. Feature channels must follow the layout's declared order.
pub fn to_grid(feat: &FeatureTensor, layout: &ElectrodeLayout) -> Result<Sample4D> {
    if feat.channels != layout.len() {
        return Err(Error::shape(format!(
            "{} feature channels for a {}-channel layout",
            feat.channels,
            layout.len()
        )));
    }
    let (depth, slices) = (feat.features(), feat.windows);
    let mut s = Sample4D::zeros([layout.grid_h, layout.grid_w, depth, slices], feat.label);
    let block = depth * slices;
    for (ch, p) in layout.placements.iter().enumerate() {
        let dst = s.index(p.row, p.col, 0, 0);
        s.values[dst..dst + block].copy_from_slice(&feat.values[ch * block..(ch + 1) * block]);
    }
    Ok(s)
}

/// Inverse of [`to_grid`]: read each channel's features back off the grid.
pub fn from_grid(sample: &Sample4D, layout: &ElectrodeLayout) -> Result<FeatureTensor> {
    if sample.height() != layout.grid_h || sample.width() != layout.grid_w {
        return Err(Error::shape(format!(
            "sample grid {}x{} against layout {}x{}",
            sample.height(),
            sample.width(),
            layout.grid_h,
            layout.grid_w
        )));
    }
    if !sample.depth().is_multiple_of(2) {
        return Err(Error::shape("feature depth must hold DE and PSD halves"));
    }
    let block = sample.depth() * sample.slices();
    let mut values = Vec::with_capacity(layout.len() * block);
    for p in &layout.placements {
        let src = sample.index(p.row, p.col, 0, 0);
        values.extend_from_slice(&sample.values[src..src + block]);
    }
    Ok(FeatureTensor {
        values,
        channels: layout.len(),
        bands: sample.depth() / 2,
        windows: sample.slices(),
        label: sample.label,
    })
}
