//! The proposed bimodal network, its baselines and ablations, and
//! per-step inference.

mod build;
mod predict;

pub use build::{
    build_ariav, build_brnn, build_ryant_dnn, build_tao2017, build_unimodal, scaled_width, AriavStage, BrnnConfig,
    BuildOptions, Frontend, MIN_WIDTH,
};
pub use predict::{predict, predict_graph, Prediction};

use crate::error::{Error, Result};
use crate::features::{FeatureContract, Normalizer};
use crate::nn::{serialize, ModelGraph};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BrnnE2e,
    RyantDnn,
    Tao2017Brnn,
    AriavAeRnn,
    AudioOnly,
    VideoOnly,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::BrnnE2e,
        ModelKind::RyantDnn,
        ModelKind::Tao2017Brnn,
        ModelKind::AriavAeRnn,
        ModelKind::AudioOnly,
        ModelKind::VideoOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BrnnE2e => "brnn-e2e",
            ModelKind::RyantDnn => "ryant-dnn",
            ModelKind::Tao2017Brnn => "tao2017-brnn",
            ModelKind::AriavAeRnn => "ariav-ae-rnn",
            ModelKind::AudioOnly => "audio-only",
            ModelKind::VideoOnly => "video-only",
        }
    }

    /// Short name used on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            ModelKind::BrnnE2e => "brnn",
            ModelKind::RyantDnn => "ryant",
            ModelKind::Tao2017Brnn => "tao2017",
            ModelKind::AriavAeRnn => "ariav",
            ModelKind::AudioOnly => "audio-only",
            ModelKind::VideoOnly => "video-only",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self != ModelKind::RyantDnn
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.short_name() == s)
            .ok_or_else(|| {
                Error::Input(format!(
                    "unknown model {s:?} (expected brnn|ryant|tao2017|ariav|audio-only|video-only)"
                ))
            })
    }
}

/// Header metadata stored with every model file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ModelKind,
    pub contract: FeatureContract,
    pub normalizers: Vec<Normalizer>,
    pub width_scale: f64,
}

/// A model graph together with the features it expects.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub graph: ModelGraph,
    pub meta: ModelMeta,
}

impl TrainedModel {
    pub fn new(graph: ModelGraph, meta: ModelMeta) -> Result<Self> {
        meta.contract.check(graph.spec())?;
        Ok(TrainedModel { graph, meta })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_value(&self.meta).expect("meta serialises");
        serialize::encode(&self.graph, &meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (graph, meta) = serialize::load(path)?;
        let meta: ModelMeta =
            serde_json::from_value(meta).map_err(|e| Error::format(path, 0, &format!("model metadata: {e}")))?;
        TrainedModel::new(graph, meta)
    }
}
