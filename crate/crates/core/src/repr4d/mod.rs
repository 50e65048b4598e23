//! Electrode-grid layouts and the 4D sample representation.

mod io;
mod layout;
mod normalize;
mod sample;
mod subset;

pub use io::{
    container_bytes, parse_samples, read_samples, write_container, SAMPLE_MAGIC, SAMPLE_VERSION,
};
pub use layout::{load_layout, ElectrodeLayout, Placement, DEFAULT_LAYOUT, GRID_H, GRID_W, SEED_CHANNELS};
pub use normalize::{fit_normalizer, normalize, Normalizer, STD_FLOOR};
pub use sample::{from_grid, to_grid, Sample4D, CLASS_NAMES};
pub use subset::{feature_subset, FeatureMode};
