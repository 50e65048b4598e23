//! Butterworth band-pass design (analog prototype, low-pass to band-pass
//! transform, bilinear map with pre-warping) realized as biquad cascades.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandName {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BandName::Delta => "delta",
            BandName::Theta => "theta",
            BandName::Alpha => "alpha",
            BandName::Beta => "beta",
            BandName::Gamma => "gamma",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: BandName,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    pub const DELTA: BandSpec = BandSpec::new(BandName::Delta, 1.0, 4.0);
    pub const THETA: BandSpec = BandSpec::new(BandName::Theta, 4.0, 8.0);
    pub const ALPHA: BandSpec = BandSpec::new(BandName::Alpha, 8.0, 14.0);
    pub const BETA: BandSpec = BandSpec::new(BandName::Beta, 14.0, 31.0);
    pub const GAMMA: BandSpec = BandSpec::new(BandName::Gamma, 31.0, 51.0);

    pub const fn new(name: BandName, low_hz: f64, high_hz: f64) -> Self {
        Self {
            name,
            low_hz,
            high_hz,
        }
    }

    /// δ, θ, α, β, γ in that order.
    pub fn canonical() -> [BandSpec; 5] {
        [Self::DELTA, Self::THETA, Self::ALPHA, Self::BETA, Self::GAMMA]
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        let ok = self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < fs / 2.0;
        if ok && fs.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidBand {
                name: self.name.to_string(),
                low_hz: self.low_hz,
                high_hz: self.high_hz,
                fs,
            })
        }
    }
}

/// One second-order section, `a0` normalized to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    pub fn poles(&self) -> [Complex64; 2] {
        // z² + a1 z + a2 = 0
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterCoeffs {
    pub sections: Vec<Biquad>,
    pub band: BandSpec,
    pub fs: f64,
    pub order: usize,
}

impl FilterCoeffs {
    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * f_hz / self.fs);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |h, s| h * s.response(z_inv))
    }

    pub fn magnitude(&self, f_hz: f64) -> f64 {
        self.response(f_hz).norm()
    }

    pub fn magnitude_db(&self, f_hz: f64) -> f64 {
        20.0 * self.magnitude(f_hz).log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }
}

/// Order-`order` Butterworth band-pass for `band` at sampling rate `fs`, as a
/// cascade of `order` biquads with unit gain at the band's geometric centre.
pub fn design_bandpass(band: &BandSpec, fs: f64, order: usize) -> Result<FilterCoeffs> {
    if order < 1 {
        return Err(Error::InvalidOrder(order));
    }
    band.validate(fs)?;

    let fs2 = 2.0 * fs;
    let w1 = fs2 * (PI * band.low_hz / fs).tan();
    let w2 = fs2 * (PI * band.high_hz / fs).tan();
    let bw = w2 - w1;
    let w0_sq = w1 * w2;

    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let proto = Complex64::from_polar(1.0, theta);
        // s² - p·bw·s + w0² = 0 for each prototype pole p.
        let half = proto * (bw / 2.0);
        let disc = (half * half - w0_sq).sqrt();
        for s in [half + disc, half - disc] {
            poles.push((fs2 + s) / (fs2 - s));
        }
    }

    let mut sections = pair_poles(&poles)
        .into_iter()
        .map(|(a1, a2)| Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1,
            a2,
        })
        .collect::<Vec<_>>();
    sections.sort_by(|x, y| x.a2.abs().total_cmp(&y.a2.abs()));

    let mut coeffs = FilterCoeffs {
        sections,
        band: *band,
        fs,
        order,
    };
    // Unit gain where the analog transform maps to the prototype's DC.
    let w_center = 2.0 * (w0_sq.sqrt() / fs2).atan();
    let gain = coeffs.magnitude(w_center * fs / (2.0 * PI));
    let per_section = gain.powf(-1.0 / order as f64);
    for s in coeffs.sections.iter_mut() {
        s.b0 *= per_section;
        s.b2 *= per_section;
    }
    Ok(coeffs)
}

/// Group poles into real denominators `(a1, a2)`: conjugate pairs first, then
/// leftover real poles two at a time.
fn pair_poles(poles: &[Complex64]) -> Vec<(f64, f64)> {
    const IMAG_TOL: f64 = 1e-12;
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im > IMAG_TOL {
            out.push((-2.0 * p.re, p.norm_sqr()));
        } else if p.im.abs() <= IMAG_TOL {
            reals.push(p.re);
        }
    }
    reals.sort_by(f64::total_cmp);
    for pair in reals.chunks(2) {
        match *pair {
            [p, q] => out.push((-(p + q), p * q)),
            [p] => out.push((-p, 0.0)),
            _ => unreachable!(),
        }
    }
    out
}

/// Causal filtering through the cascade (transposed direct form II, zero
/// initial state). Output has the input's length.
pub fn apply_filter(coeffs: &FilterCoeffs, signal: &[f64]) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut y = signal.to_vec();
    for s in &coeffs.sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in y.iter_mut() {
            let x = *v;
            let out = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * out + z2;
            z2 = s.b2 * x - s.a2 * out;
            *v = out;
        }
    }
    Ok(y)
}

/// Filters for a set of bands at one sampling rate.
#[derive(Clone, Debug)]
pub struct FilterBank {
    pub filters: Vec<FilterCoeffs>,
    pub fs: f64,
}

impl FilterBank {
    pub fn new(bands: &[BandSpec], fs: f64, order: usize) -> Result<Self> {
        let filters = bands
            .iter()
            .map(|b| design_bandpass(b, fs, order))
            .collect::<Result<_>>()?;
        Ok(Self { filters, fs })
    }

    /// Order-5 filters for the five canonical bands.
    pub fn canonical(fs: f64) -> Result<Self> {
        Self::new(&BandSpec::canonical(), fs, 5)
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }
}
