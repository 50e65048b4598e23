//! EEG emotion recognition with a spatial-spectral-temporal attention network.
//!
//! The pipeline runs raw multichannel EEG through a Butterworth filter bank,
//! extracts differential-entropy and mean-power features per 0.5 s window,
//! scatters them onto a 19×19 electrode grid and classifies the resulting
//! `[19, 19, 10, 6]` tensors with an attention CNN followed by an attention
//! bidirectional LSTM.

mod bytes;
pub mod diffcore;
pub mod error;
pub mod explain;
pub mod model;
pub mod repr4d;
pub mod sigproc;
pub mod train;

pub use error::{Error, Result};
