use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Independent switches for the three attention mechanisms. A disabled
/// mechanism becomes an identity gate (spectral, spatial) or uniform
/// weights (temporal); its parameters stay in the store but go unused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttentionFlags {
    pub spectral: bool,
    pub spatial: bool,
    pub temporal: bool,
}

impl AttentionFlags {
    pub const ALL: Self = Self { spectral: true, spatial: true, temporal: true };
    pub const NONE: Self = Self { spectral: false, spatial: false, temporal: false };

    /// Short tag such as `all`, `no-spectral` or `none`.
    pub fn label(&self) -> String {
        match (self.spectral, self.spatial, self.temporal) {
            (true, true, true) => "all".into(),
            (false, false, false) => "none".into(),
            _ => {
                let off: Vec<&str> = [("spectral", self.spectral), ("spatial", self.spatial), ("temporal", self.temporal)]
                    .iter()
                    .filter(|(_, on)| !on)
                    .map(|(n, _)| *n)
                    .collect();
                format!("no-{}", off.join("-"))
            }
        }
    }
}

impl Default for AttentionFlags {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    /// Features per grid cell and slice.
    pub depth: usize,
    pub slices: usize,
    pub conv_channels: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    /// Width of the per-slice CNN embedding.
    pub fc_units: usize,
    /// Memory cells per LSTM direction.
    pub lstm_units: usize,
    pub temporal_hidden: usize,
    pub classes: usize,
    /// Bottleneck ratio of the spectral-attention MLP.
    pub reduction: usize,
    /// Smallest allowed bottleneck width.
    pub min_hidden: usize,
    pub spatial_kernel: usize,
    pub attention: AttentionFlags,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            grid_h: 19,
            grid_w: 19,
            depth: 10,
            slices: 6,
            conv_channels: vec![64, 128, 256, 64],
            conv_kernels: vec![5, 5, 5, 3],
            fc_units: 150,
            lstm_units: 36,
            temporal_hidden: 32,
            classes: 3,
            reduction: 8,
            min_hidden: 4,
            spatial_kernel: 7,
            attention: AttentionFlags::ALL,
        }
    }
}

impl ModelConfig {
    /// Small network for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            grid_h: 5,
            grid_w: 5,
            depth: 4,
            slices: 2,
            conv_channels: vec![4, 4, 4, 4],
            conv_kernels: vec![3, 3, 3, 3],
            fc_units: 16,
            lstm_units: 4,
            temporal_hidden: 4,
            classes: 3,
            reduction: 8,
            min_hidden: 4,
            spatial_kernel: 3,
            attention: AttentionFlags::ALL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("grid_h", self.grid_h),
            ("grid_w", self.grid_w),
            ("depth", self.depth),
            ("slices", self.slices),
            ("fc_units", self.fc_units),
            ("lstm_units", self.lstm_units),
            ("temporal_hidden", self.temporal_hidden),
            ("classes", self.classes),
            ("reduction", self.reduction),
            ("min_hidden", self.min_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.conv_channels.is_empty() || self.conv_channels.len() != self.conv_kernels.len() {
            return Err(Error::Config(format!(
                "{} conv channel counts for {} kernel sizes",
                self.conv_channels.len(),
                self.conv_kernels.len()
            )));
        }
        if self.conv_channels.contains(&0) {
            return Err(Error::Config("conv channel counts must be positive".into()));
        }
        for &k in self.conv_kernels.iter().chain([&self.spatial_kernel]) {
            if k % 2 == 0 {
                return Err(Error::Config(format!("kernel size {k} must be odd")));
            }
        }
        if self.grid_h < 2 || self.grid_w < 2 {
            return Err(Error::Config("grid must be at least 2x2 to pool".into()));
        }
        Ok(())
    }

    /// Bottleneck width of the spectral-attention MLP for `channels` maps.
    pub fn attention_hidden(&self, channels: usize) -> usize {
        (channels / self.reduction).max(self.min_hidden)
    }

    pub fn last_channels(&self) -> usize {
        *self.conv_channels.last().expect("validated")
    }

    /// Flattened size after the 2x2 pool.
    pub fn flat_len(&self) -> usize {
        (self.grid_h / 2) * (self.grid_w / 2) * self.last_channels()
    }

    pub fn sequence_width(&self) -> usize {
        2 * self.lstm_units
    }
}
