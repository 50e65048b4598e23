//! Band decomposition and windowed DE / mean-power feature extraction.

mod features;
mod filter;
mod raw;

pub use features::{compute_de, compute_psd, extract_features, FeatureTensor, VARIANCE_FLOOR};
pub use filter::{apply_filter, design_bandpass, BandName, BandSpec, Biquad, FilterBank, FilterCoeffs};
pub use raw::{segment, RawRecording, Segment, RAW_MAGIC, RAW_VERSION};
