//! `E4DA` sample files.
//!
//! A record (little-endian) is magic `E4DA`, u32 version, u32 dims[4],
//! u32 label, u32 subject, u32 experiment, then the f32 values in row-major
//! order. A file holds either one record, or a u64 record count followed by
//! that many records back to back.

use std::path::Path;

use crate::bytes::{f32s, ByteReader};
use crate::error::{Error, Result};
use crate::repr4d::Sample4D;

pub const SAMPLE_MAGIC: [u8; 4] = *b"E4DA";
pub const SAMPLE_VERSION: u32 = 1;

impl Sample4D {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(36 + 4 * self.values.len());
        self.write_record(&mut out);
        out
    }

    fn write_record(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&SAMPLE_MAGIC);
        out.extend_from_slice(&SAMPLE_VERSION.to_le_bytes());
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in [self.label, self.subject, self.experiment] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn read_record(r: &mut ByteReader<'_>) -> Result<Self> {
        if r.take(4)? != SAMPLE_MAGIC {
            return Err(Error::Format("sample: bad magic".into()));
        }
        let version = r.u32()?;
        if version != SAMPLE_VERSION {
            return Err(Error::Format(format!("sample: unsupported version {version}")));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let (label, subject, experiment) = (r.u32()?, r.u32()?, r.u32()?);
        let count = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format("sample: dims overflow".into()))?;
        let values = f32s(r, count)?;
        Ok(Self {
            values,
            dims,
            label,
            subject,
            experiment,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let s = Self::read_record(&mut r)?;
        if r.remaining() != 0 {
            return Err(Error::Format("sample: trailing bytes".into()));
        }
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn container_bytes(samples: &[Sample4D]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        s.write_record(&mut out);
    }
    out
}

pub fn write_container(samples: &[Sample4D], path: &Path) -> Result<()> {
    std::fs::write(path, container_bytes(samples)).map_err(|e| Error::io(path, e))
}

/// Decode either a single-record file or a container.
pub fn parse_samples(bytes: &[u8]) -> Result<Vec<Sample4D>> {
    if bytes.starts_with(&SAMPLE_MAGIC) {
        return Ok(vec![Sample4D::from_bytes(bytes)?]);
    }
    let mut r = ByteReader::new(bytes);
    let n = r.u64()?;
    let mut out = Vec::new();
    for _ in 0..n {
        out.push(Sample4D::read_record(&mut r)?);
    }
    if r.remaining() != 0 {
        return Err(Error::Format("sample container: trailing bytes".into()));
    }
    Ok(out)
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample4D>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_samples(&bytes)
}
