//! Raw multichannel recordings and the `E4DR` exchange format.
//!
//! Layout (little-endian): magic `E4DR`, u32 version, f32 sampling rate,
//! u32 channel count, per channel a u8 byte length followed by the ASCII
//! name, u32 label, u32 subject, u32 experiment, u64 samples per channel,
//! then `channels × samples` f32 values, channel-major.

use std::collections::HashSet;
use std::path::Path;

use crate::bytes::ByteReader;
use crate::error::{Error, Result};

pub const RAW_MAGIC: [u8; 4] = *b"E4DR";
pub const RAW_VERSION: u32 = 1;

/// Highest canonical band edge; the sampling rate must exceed twice this.
const HIGHEST_BAND_EDGE_HZ: f64 = 51.0;

#[derive(Clone, Debug, PartialEq)]
pub struct RawRecording {
    pub channels: Vec<String>,
    /// `[channels × n_samples]`, channel-major.
    pub data: Vec<f32>,
    pub fs: f64,
    pub label: u32,
    pub subject: u32,
    pub experiment: u32,
}

impl RawRecording {
    pub fn new(
        channels: Vec<String>,
        data: Vec<f32>,
        fs: f64,
        label: u32,
        subject: u32,
        experiment: u32,
    ) -> Result<Self> {
        let rec = Self {
            channels,
            data,
            fs,
            label,
            subject,
            experiment,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Data("recording has no channels".into()));
        }
        let mut seen = HashSet::new();
        for name in &self.channels {
            if !seen.insert(name.to_ascii_uppercase()) {
                return Err(Error::Data(format!("duplicate channel {name}")));
            }
        }
        if self.fs.is_nan() || self.fs <= 2.0 * HIGHEST_BAND_EDGE_HZ || !self.fs.is_finite() {
            return Err(Error::Data(format!(
                "sampling rate {} Hz must exceed {} Hz",
                self.fs,
                2.0 * HIGHEST_BAND_EDGE_HZ
            )));
        }
        if !self.data.len().is_multiple_of(self.channels.len()) {
            return Err(Error::shape(format!(
                "{} samples do not divide into {} channels",
                self.data.len(),
                self.channels.len()
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.data.len() / self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.n_samples();
        &self.data[c * n..(c + 1) * n]
    }

    /// Copy with channels rearranged into `order` (names matched
    /// case-insensitively).
    pub fn reorder(&self, order: &[String]) -> Result<Self> {
        let n = self.n_samples();
        let mut data = Vec::with_capacity(order.len() * n);
        for name in order {
            let idx = self
                .channels
                .iter()
                .position(|c| c.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Data(format!("recording lacks channel {name}")))?;
            data.extend_from_slice(self.channel(idx));
        }
        Ok(Self {
            channels: order.to_vec(),
            data,
            ..self.clone()
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(64 + 4 * self.data.len());
        out.extend_from_slice(&RAW_MAGIC);
        out.extend_from_slice(&RAW_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.fs as f32).to_le_bytes());
        out.extend_from_slice(&(self.channels.len() as u32).to_le_bytes());
        for name in &self.channels {
            let len = u8::try_from(name.len())
                .map_err(|_| Error::Format(format!("channel name too long: {name}")))?;
            out.push(len);
            out.extend_from_slice(name.as_bytes());
        }
        for v in [self.label, self.subject, self.experiment] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.n_samples() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != RAW_MAGIC {
            return Err(Error::Format("raw recording: bad magic".into()));
        }
        let version = r.u32()?;
        if version != RAW_VERSION {
            return Err(Error::Format(format!("raw recording: unsupported version {version}")));
        }
        let fs = r.f32()? as f64;
        let n_ch = r.u32()? as usize;
        let mut channels = Vec::with_capacity(n_ch);
        for _ in 0..n_ch {
            let len = r.take(1)?[0] as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("raw recording: channel name is not UTF-8".into()))?;
            channels.push(name.to_string());
        }
        let (label, subject, experiment) = (r.u32()?, r.u32()?, r.u32()?);
        let n = r.u64()? as usize;
        let count = n
            .checked_mul(n_ch)
            .ok_or_else(|| Error::Format("raw recording: size overflow".into()))?;
        let payload = r.take(count.checked_mul(4).ok_or_else(|| Error::Format("raw recording: size overflow".into()))?)?;
        if r.remaining() != 0 {
            return Err(Error::Format("raw recording: trailing bytes".into()));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Self::new(channels, data, fs, label, subject, experiment)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }
}

/// A `T`-second slice of a recording, all channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub channels: usize,
    /// `[channels × len]`, channel-major.
    pub data: Vec<f32>,
    pub label: u32,
    pub subject: u32,
    pub experiment: u32,
    /// Position of the segment within its recording.
    pub index: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.data.len() / self.channels.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.len();
        &self.data[c * n..(c + 1) * n]
    }
}

/// Non-overlapping `seconds`-long segments; the trailing remainder is dropped
/// and a recording shorter than one segment yields none.
pub fn segment(rec: &RawRecording, seconds: f64) -> Vec<Segment> {
    let len = (seconds * rec.fs).round() as usize;
    if len == 0 {
        return Vec::new();
    }
    let n = rec.n_samples();
    (0..n / len)
        .map(|k| {
            let mut data = Vec::with_capacity(rec.channels.len() * len);
            for c in 0..rec.channels.len() {
                data.extend_from_slice(&rec.channel(c)[k * len..(k + 1) * len]);
            }
            Segment {
                channels: rec.channels.len(),
                data,
                label: rec.label,
                subject: rec.subject,
                experiment: rec.experiment,
                index: k,
            }
        })
        .collect()
}
