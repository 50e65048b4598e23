//! The attention CNN / BiLSTM classifier and its self-describing checkpoints.

mod config;
mod network;
#[cfg(test)]
mod tests;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Checkpoint, Graph, ParamStore, Real, Tensor};
use crate::error::{Error, Result};
use crate::repr4d::{feature_subset, FeatureMode, Normalizer, Sample4D};

pub use config::{AttentionFlags, ModelConfig};
pub use network::{
    aggregate, apply_spatial, apply_spectral, bilstm_forward, classify, cnn_forward, forward, init_params, loss,
    lstm_cell, lstm_step, slice_batch, spatial_attention, spectral_attention, temporal_attention, uniform_weights,
    CnnOutput, ForwardVars, StageGates, PROB_FLOOR,
};

/// Attention gates of one forward pass, copied off the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMaps {
    /// Per conv stage `[B * T, C]`, absent when disabled.
    pub spectral: Vec<Option<Tensor<f32>>>,
    /// Per conv stage `[B * T, H, W, 1]`, absent when disabled.
    pub spatial: Vec<Option<Tensor<f32>>>,
    /// `[B, T]`.
    pub temporal: Tensor<f32>,
}

impl AttentionMaps {
    pub fn from_graph<F: Real>(g: &Graph<F>, fwd: &ForwardVars) -> Self {
        let copy = |v: &Option<crate::diffcore::Var>| v.map(|v| g.value(v).cast());
        Self {
            spectral: fwd.gates.spectral.iter().map(copy).collect(),
            spatial: fwd.gates.spatial.iter().map(copy).collect(),
            temporal: g.value(fwd.temporal).cast(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    format: String,
    config: ModelConfig,
    features: FeatureMode,
    normalizer: Option<Normalizer>,
}

const META_FORMAT: &str = "eeg4d-model";
const PARAM_PREFIX: &str = "model.";

/// A parameterized network plus the preprocessing it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub features: FeatureMode,
    pub normalizer: Option<Normalizer>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(&config, &mut rng)?;
        Ok(Self {
            config,
            params,
            features: FeatureMode::Both,
            normalizer: None,
        })
    }

    /// Apply the feature subset and normalizer to a raw sample.
    pub fn prepare(&self, sample: &Sample4D) -> Result<Sample4D> {
        let s = feature_subset(sample, self.features, false)?;
        match &self.normalizer {
            Some(n) => n.normalize(&s),
            None => Ok(s),
        }
    }

    /// Class probabilities for already-prepared samples.
    pub fn predict(&self, samples: &[&Sample4D]) -> Result<Vec<Vec<f32>>> {
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let vars = self.params.register(&mut g);
        let x = g.constant(slice_batch(&self.config, samples)?);
        let fwd = forward(&mut g, &self.config, &vars, x)?;
        Ok(g.value(fwd.probs).data().chunks(self.config.classes).map(<[f32]>::to_vec).collect())
    }

    /// Probabilities and attention maps for one prepared sample.
    pub fn inspect(&self, sample: &Sample4D) -> Result<(Vec<f32>, AttentionMaps)> {
        let mut g = Graph::new();
        let vars = self.params.register(&mut g);
        let x = g.constant(slice_batch(&self.config, &[sample])?);
        let fwd = forward(&mut g, &self.config, &vars, x)?;
        Ok((g.value(fwd.probs).data().to_vec(), AttentionMaps::from_graph(&g, &fwd)))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = CheckpointMeta {
            format: META_FORMAT.into(),
            config: self.config.clone(),
            features: self.features,
            normalizer: self.normalizer.clone(),
        };
        let meta = serde_json::to_value(meta).map_err(|e| Error::Format(e.to_string()))?;
        let mut ck = Checkpoint::new(meta);
        ck.add_params(PARAM_PREFIX, &self.params);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: CheckpointMeta =
            serde_json::from_value(ck.meta.clone()).map_err(|e| Error::Format(format!("model checkpoint: {e}")))?;
        if meta.format != META_FORMAT {
            return Err(Error::Format(format!("not a model checkpoint: {}", meta.format)));
        }
        meta.config.validate()?;
        let params = ck.params(PARAM_PREFIX)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let reference: ParamStore<f32> = init_params(&meta.config, &mut rng)?;
        for (name, p) in reference.iter() {
            let got = params
                .get(name)
                .ok_or_else(|| Error::Format(format!("model checkpoint lacks {name}")))?;
            if got.shape() != p.value.shape() {
                return Err(Error::Format(format!(
                    "model checkpoint {name}: shape {:?}, config needs {:?}",
                    got.shape(),
                    p.value.shape()
                )));
            }
        }
        if params.len() != reference.len() {
            return Err(Error::Format("model checkpoint has unexpected tensors".into()));
        }
        Ok(Self {
            config: meta.config,
            params,
            features: meta.features,
            normalizer: meta.normalizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(path)?)
    }
}
