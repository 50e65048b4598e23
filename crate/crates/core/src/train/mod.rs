//! Cross-validated training, Adam, metrics, ablations and synthetic data.

mod ablation;
mod adam;
mod config;
mod metrics;
mod split;
mod synth;
mod trainer;

pub use ablation::{ablation_sweep, ablation_table, AblationRow, ABLATION_COMBOS};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::TrainConfig;
pub use metrics::{curve_csv, EpochRecord, ExperimentMetrics, FoldMetrics, RunMetrics, SubjectMetrics};
pub use split::{kfold_split, Fold};
pub use synth::{synth_dataset, SynthSpec};
pub use trainer::{
    argmax, derive_seed, evaluate, group_experiments, prepare_fold, train_dataset, train_experiment, train_fold,
    FoldOutcome, TrainRun,
};

pub use crate::repr4d::{feature_subset, FeatureMode};

use crate::model::PROB_FLOOR;

/// `-ln(max(p[label], 1e-12))`.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(PROB_FLOOR).ln()
}
