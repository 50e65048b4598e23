use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repr4d::{ElectrodeLayout, Sample4D};

/// Parameters of the synthetic class-structured dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    /// Features per cell; the first half is treated as DE.
    pub depth: usize,
    pub slices: usize,
    /// Offset added to the class's DE band in its region and slices.
    pub amplitude: f32,
    /// Standard deviation of the background noise.
    pub noise: f32,
    /// Put every class's signal in this one slice instead of a
    /// class-specific pair, and raise the noise elsewhere.
    pub focus_slice: Option<usize>,
    pub subject: u32,
    pub experiment: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            per_class: 40,
            seed: 0,
            depth: 10,
            slices: 6,
            amplitude: 1.5,
            noise: 1.0,
            focus_slice: None,
            subject: 1,
            experiment: 1,
        }
    }
}

impl SynthSpec {
    /// Grid rows `[start, end)` carrying class `k`'s signal: the layout's
    /// occupied rows are cut into `classes` contiguous bands.
    pub fn region(&self, layout: &ElectrodeLayout, k: usize) -> (usize, usize) {
        let mut rows: Vec<usize> = layout.placements.iter().map(|p| p.row).collect();
        rows.sort_unstable();
        rows.dedup();
        let per = rows.len().div_ceil(self.classes);
        let lo = rows[(k * per).min(rows.len() - 1)];
        let hi = rows.get((k + 1) * per).copied().unwrap_or(layout.grid_h);
        (lo, hi)
    }

    /// Slices carrying class `k`'s signal.
    pub fn active_slices(&self, k: usize) -> Vec<usize> {
        match self.focus_slice {
            Some(t) => vec![t],
            None => {
                let per = (self.slices / self.classes).max(1);
                (k * per..((k + 1) * per).min(self.slices)).collect()
            }
        }
    }

    /// DE feature index boosted for class `k`.
    pub fn band(&self, k: usize) -> usize {
        k % (self.depth / 2).max(1)
    }

    fn validate(&self, layout: &ElectrodeLayout) -> Result<()> {
        if self.classes == 0 || self.per_class == 0 || self.depth < 2 || self.slices == 0 {
            return Err(Error::Config("synthetic spec needs classes, samples, depth >= 2 and slices".into()));
        }
        if self.focus_slice.is_some_and(|t| t >= self.slices) {
            return Err(Error::Config("focus slice out of range".into()));
        }
        if self.classes > self.slices && self.focus_slice.is_none() {
            return Err(Error::Config("more classes than slices".into()));
        }
        if layout.is_empty() {
            return Err(Error::Config("layout has no electrodes".into()));
        }
        if self.noise.is_nan() || self.noise < 0.0 {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generate `classes × per_class` samples, ordered by class. Class `k` adds
/// `amplitude` to DE band `k` on electrodes inside its region during its
/// active slices; every electrode cell carries Gaussian noise and padding
/// cells stay zero.
pub fn synth_dataset(spec: &SynthSpec, layout: &ElectrodeLayout) -> Result<Vec<Sample4D>> {
    spec.validate(layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    let dims = [layout.grid_h, layout.grid_w, spec.depth, spec.slices];
    let mut out = Vec::with_capacity(spec.classes * spec.per_class);
    for k in 0..spec.classes {
        let (lo, hi) = spec.region(layout, k);
        let active = spec.active_slices(k);
        let band = spec.band(k);
        for _ in 0..spec.per_class {
            let mut s = Sample4D::zeros(dims, k as u32);
            s.subject = spec.subject;
            s.experiment = spec.experiment;
            for p in &layout.placements {
                for f in 0..spec.depth {
                    for t in 0..spec.slices {
                        let scale = match spec.focus_slice {
                            Some(ft) if ft != t => 2.0 * spec.noise,
                            _ => spec.noise,
                        };
                        let mut v = scale * normal.sample(&mut rng);
                        if f == band && (lo..hi).contains(&p.row) && active.contains(&t) {
                            v += spec.amplitude;
                        }
                        let i = s.index(p.row, p.col, f, t);
                        s.values[i] = v;
                    }
                }
            }
            out.push(s);
        }
    }
    Ok(out)
}
