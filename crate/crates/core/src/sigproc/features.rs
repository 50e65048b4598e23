use std::f64::consts::{E, PI};

use crate::error::{Error, Result};
use crate::sigproc::filter::{apply_filter, FilterBank};
use crate::sigproc::raw::Segment;

/// Variance floor applied before taking the logarithm in [`compute_de`].
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Mean power `E[x²]` of a window.
pub fn compute_psd(window: &[f64]) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(window.iter().map(|x| x * x).sum::<f64>() / window.len() as f64)
}

/// Differential entropy of a Gaussian fit, `½·ln(2πe·σ²)`, with the biased
/// (divisor N) variance floored at [`VARIANCE_FLOOR`].
pub fn compute_de(window: &[f64]) -> Result<f64> {
    if window.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: window.len(),
        });
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(0.5 * (2.0 * PI * E * var.max(VARIANCE_FLOOR)).ln())
}

/// Per-segment features `[channels × 2·bands × windows]`, row-major. The
/// feature axis holds every band's DE first, then every band's mean power.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTensor {
    pub values: Vec<f32>,
    pub channels: usize,
    pub bands: usize,
    pub windows: usize,
    pub label: u32,
}

impl FeatureTensor {
    pub fn features(&self) -> usize {
        2 * self.bands
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.features(), self.windows]
    }

    #[inline]
    pub fn index(&self, channel: usize, feature: usize, window: usize) -> usize {
        (channel * self.features() + feature) * self.windows + window
    }

    pub fn get(&self, channel: usize, feature: usize, window: usize) -> f32 {
        self.values[self.index(channel, feature, window)]
    }

    pub fn zeros(channels: usize, bands: usize, windows: usize, label: u32) -> Self {
        Self {
            values: vec![0.0; channels * 2 * bands * windows],
            channels,
            bands,
            windows,
            label,
        }
    }
}

/// Filter each channel of `segment` through every band once, cut the filtered
/// signal into non-overlapping `window_s` windows, and compute DE and mean
/// power per window.
pub fn extract_features(segment: &Segment, bank: &FilterBank, window_s: f64) -> Result<FeatureTensor> {
    let seg_len = segment.len();
    let win = (window_s * bank.fs).round() as usize;
    if win == 0 || !seg_len.is_multiple_of(win) || (win as f64 - window_s * bank.fs).abs() > 1e-9 {
        return Err(Error::InvalidWindow {
            window: win,
            segment: seg_len,
        });
    }
    let windows = seg_len / win;
    let bands = bank.len();
    let mut out = FeatureTensor::zeros(segment.channels, bands, windows, segment.label);
    let mut signal = vec![0.0f64; seg_len];
    for ch in 0..segment.channels {
        for (dst, &v) in signal.iter_mut().zip(segment.channel(ch)) {
            *dst = v as f64;
        }
        for (b, filter) in bank.filters.iter().enumerate() {
            let filtered = apply_filter(filter, &signal)?;
            for (w, chunk) in filtered.chunks_exact(win).enumerate() {
                let de_at = out.index(ch, b, w);
                out.values[de_at] = compute_de(chunk)? as f32;
                let psd_at = out.index(ch, bands + b, w);
                out.values[psd_at] = compute_psd(chunk)? as f32;
            }
        }
    }
    if out.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite feature in segment {} (label {})",
            segment.index, segment.label
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    /// -∫ f ln f over the fitted Gaussian, by composite Simpson on ±12σ.
    fn de_by_quadrature(var: f64) -> f64 {
        let s = var.sqrt();
        let (a, b, n) = (-12.0 * s, 12.0 * s, 20_000usize);
        let h = (b - a) / n as f64;
        let f = |x: f64| {
            let p = (-(x * x) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            if p > 0.0 {
                -p * p.ln()
            } else {
                0.0
            }
        };
        let mut acc = f(a) + f(b);
        for i in 1..n {
            acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn psd_examples() {
        assert_eq!(compute_psd(&[2.0; 10]).unwrap(), 4.0);
        assert_eq!(compute_psd(&[0.0; 10]).unwrap(), 0.0);
        let sine: Vec<f64> = (0..100).map(|i| (2.0 * PI * i as f64 / 20.0).sin()).collect();
        assert!((compute_psd(&sine).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(compute_psd(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn de_of_unit_gaussian() {
        let x = gaussian(10_000, 1.0, 7);
        let de = compute_de(&x).unwrap();
        assert!((de - 1.4189).abs() < 0.05, "{de}");
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((de - de_by_quadrature(var)).abs() < 1e-6);
    }

    #[test]
    fn de_degenerate_cases() {
        // Two points at ±σ with σ² = 1/(2πe).
        let s = (1.0 / (2.0 * PI * E)).sqrt();
        assert!(compute_de(&[s, -s]).unwrap().abs() < 1e-12);
        let floor = 0.5 * (2.0 * PI * E * VARIANCE_FLOOR).ln();
        assert_eq!(compute_de(&[3.0; 16]).unwrap(), floor);
        assert!(matches!(
            compute_de(&[1.0]),
            Err(Error::InsufficientSamples { needed: 2, got: 1 })
        ));
    }

    proptest! {
        #[test]
        fn de_translation_invariant(seed in 0u64..1000, c in -1e3f64..1e3) {
            let x = gaussian(100, 1.0, seed);
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            prop_assert!((compute_de(&x).unwrap() - compute_de(&shifted).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn de_scaling_law(seed in 0u64..1000, k in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
            let x = gaussian(100, 1.0, seed);
            let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
            let want = compute_de(&x).unwrap() + k.abs().ln();
            prop_assert!((compute_de(&scaled).unwrap() - want).abs() < 1e-6);
        }

        #[test]
        fn psd_nonnegative_and_quadratic(seed in 0u64..1000, k in -20.0f64..20.0) {
            let x = gaussian(64, 3.0, seed);
            let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
            let p = compute_psd(&x).unwrap();
            prop_assert!(p >= 0.0);
            prop_assert!((compute_psd(&scaled).unwrap() - k * k * p).abs() <= 1e-9 * (1.0 + k * k * p));
        }
    }
}
