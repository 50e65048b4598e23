//! Grad-CAM++ electrode heatmaps over the last convolutional stage.

mod font;
mod render;

use serde::{Deserialize, Serialize};

use crate::diffcore::Graph;
use crate::error::{Error, Result};
use crate::model::{forward, slice_batch, Model};
use crate::repr4d::Sample4D;

pub use render::{colormap, heatmap_csv, heatmap_image, read_heatmap_csv, render_heatmap, top_channels, RenderedHeatmap, CELL_PX};

/// Non-negative class-activation map on the model grid, max-normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    /// Row-major `[height × width]`.
    pub values: Vec<f32>,
    pub height: usize,
    pub width: usize,
    pub class: usize,
    /// How per-slice maps were combined.
    pub slice_policy: String,
}

impl Heatmap {
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}

/// Grad-CAM++ from captured activations and the target score's gradients,
/// both `[slices, h, w, channels]`. Each slice gets the closed-form pixel
/// weights `g² / (2g² + Σ A g³)`, channel weights `Σ α relu(g)`, and map
/// `relu(Σ_k w_k A_k)`; slice maps are averaged and scaled to a maximum
/// of 1 (left at zero when identically zero).
pub fn gradcam_pp_maps(acts: &[f64], grads: &[f64], slices: usize, h: usize, w: usize, c: usize) -> Result<Vec<f64>> {
    let n = slices * h * w * c;
    if acts.len() != n || grads.len() != n {
        return Err(Error::shape(format!(
            "grad-cam inputs of {} and {} values for [{slices}, {h}, {w}, {c}]",
            acts.len(),
            grads.len()
        )));
    }
    let px = h * w;
    let mut total = vec![0.0; px];
    for t in 0..slices {
        let a = &acts[t * px * c..(t + 1) * px * c];
        let g = &grads[t * px * c..(t + 1) * px * c];
        let mut weights = vec![0.0; c];
        for (k, wk) in weights.iter_mut().enumerate() {
            let sum_a: f64 = (0..px).map(|p| a[p * c + k]).sum();
            for p in 0..px {
                let gi = g[p * c + k];
                let g2 = gi * gi;
                let denom = 2.0 * g2 + sum_a * g2 * gi;
                let alpha = if denom != 0.0 { g2 / denom } else { 0.0 };
                *wk += alpha * gi.max(0.0);
            }
        }
        for (p, out) in total.iter_mut().enumerate() {
            let v: f64 = (0..c).map(|k| weights[k] * a[p * c + k]).sum();
            *out += v.max(0.0) / slices as f64;
        }
    }
    let max = total.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        total.iter_mut().for_each(|v| *v /= max);
    }
    Ok(total)
}

/// Heatmap of `target` for one stored sample; the model's feature subset and
/// normalizer are applied first. Gradients are of the pre-softmax logit.
pub fn gradcam_pp(model: &Model, sample: &Sample4D, target: usize) -> Result<Heatmap> {
    let cfg = &model.config;
    if target >= cfg.classes {
        return Err(Error::Config(format!("class {target} outside 0..{}", cfg.classes)));
    }
    let prepared = model.prepare(sample)?;
    let mut g = Graph::<f32>::new();
    let vars = model.params.register(&mut g);
    let x = g.constant(slice_batch(cfg, &[&prepared])?);
    let fwd = forward(&mut g, cfg, &vars, x)?;
    let score = g.select(fwd.logits, target)?;
    g.backward(score)?;
    let [t, h, w, c] = *g.shape(fwd.capture) else {
        return Err(Error::shape("capture is not [T, H, W, C]"));
    };
    let acts = g.value(fwd.capture).to_f64_vec();
    let grads = g.grad(fwd.capture).to_f64_vec();
    let map = gradcam_pp_maps(&acts, &grads, t, h, w, c)?;
    Ok(Heatmap {
        values: map.iter().map(|&v| v as f32).collect(),
        height: h,
        width: w,
        class: target,
        slice_policy: "mean".into(),
    })
}
