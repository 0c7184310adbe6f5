//! Speaker splits, chunked batching, the training loop and the two-stage
//! Ariav schedule.

mod batch;
mod fit;
mod split;

pub use batch::{chunk_utterances, group_chunks, make_batches};
pub use fit::{evaluate_loss, train_model, EarlyStopping, History, StopDecision, TrainConfig};
pub use split::{split_corpus, split_speakers, SplitRatios, SplitSpec};

use crate::error::{Error, Result};
use crate::features::{fit_normalizers, FeatureContract, Normalizer, UtteranceFeatures};
use crate::zoo::{
    build_ariav, build_brnn, build_ryant_dnn, build_tao2017, build_unimodal, AriavStage, BrnnConfig, BuildOptions,
    Frontend, ModelKind, ModelMeta, TrainedModel,
};
use crate::nn::ModelGraph;

/// What to build: a model kind, the BRNN acoustic front-end and widths.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelRecipe {
    pub kind: ModelKind,
    pub frontend: Frontend,
    pub options: BuildOptions,
    /// Unscaled A-RNN width overriding the front-end default.
    pub audio_width: Option<usize>,
}

impl ModelRecipe {
    pub fn new(kind: ModelKind, width_scale: f64, seed: u64) -> Self {
        ModelRecipe {
            kind,
            frontend: Frontend::Mel,
            audio_width: None,
            options: BuildOptions {
                width_scale,
                seed,
                ..BuildOptions::default()
            },
        }
    }

    fn brnn(&self) -> BrnnConfig {
        let mut c = BrnnConfig::for_frontend(self.frontend, self.options);
        if let Some(w) = self.audio_width {
            c.audio_fc = w;
            c.audio_lstm = w;
        }
        c
    }

    /// Features the recipe consumes. Unimodal models read the matching
    /// stream of their source BRNN.
    pub fn contract(&self, pretrained: Option<&TrainedModel>) -> Result<FeatureContract> {
        use crate::features::{FeatureKind as F, StreamContract as S, CONTEXT};
        Ok(match self.kind {
            ModelKind::BrnnE2e => self.brnn().contract(),
            ModelKind::RyantDnn => FeatureContract {
                streams: vec![S::new("audio", &[(F::Mfcc, CONTEXT)])],
            },
            ModelKind::Tao2017Brnn => FeatureContract {
                streams: vec![S::new("audio", &[(F::Sadjadi, CONTEXT)]), S::new("video", &[(F::Visual26, 1)])],
            },
            ModelKind::AriavAeRnn => FeatureContract {
                streams: vec![S::new("audiovisual", &[(F::Mfcc, CONTEXT), (F::FlowVar, 1)])],
            },
            ModelKind::AudioOnly | ModelKind::VideoOnly => {
                let src = pretrained.ok_or_else(|| Error::Sequencing(format!("{} needs a trained BRNN", self.kind)))?;
                let i = usize::from(self.kind == ModelKind::VideoOnly);
                let stream = src
                    .meta
                    .contract
                    .streams
                    .get(i)
                    .ok_or_else(|| Error::Sequencing("pretrained model lacks the stream".into()))?;
                FeatureContract {
                    streams: vec![stream.clone()],
                }
            }
        })
    }

    /// Normalisers to use for this recipe: fitted on `train`, or inherited
    /// from the source BRNN whose subnet is reused.
    pub fn normalizers(
        &self,
        train: &[UtteranceFeatures],
        pretrained: Option<&TrainedModel>,
    ) -> Result<Vec<Normalizer>> {
        let contract = self.contract(pretrained)?;
        match (self.kind, pretrained) {
            (ModelKind::AudioOnly | ModelKind::VideoOnly, Some(src)) => {
                let want = contract.features();
                Ok(src.meta.normalizers.iter().filter(|n| want.contains(&n.feature)).cloned().collect())
            }
            _ => fit_normalizers(&contract, train),
        }
    }
}

/// Models and histories from training one recipe.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    /// The Ariav autoencoder, when stage one ran.
    pub autoencoder: Option<ModelGraph>,
    pub histories: Vec<History>,
}

/// Two stages: the autoencoder learns to reconstruct its input, then its
/// encoder is frozen under a recurrent classifier trained on labels.
pub fn train_ariav(
    contract: &FeatureContract,
    train: &[UtteranceFeatures],
    val: &[UtteranceFeatures],
    cfg: &TrainConfig,
    options: &BuildOptions,
) -> Result<(ModelGraph, ModelGraph, History, History)> {
    let mut ae = build_ariav(AriavStage::Autoencoder, None, options)?;
    let h1 = train_model(&mut ae, contract, train, val, cfg)?;
    let stage2 = BuildOptions {
        seed: options.seed.wrapping_add(1),
        ..*options
    };
    let mut clf = build_ariav(AriavStage::Classifier, Some(&ae), &stage2)?;
    let h2 = train_model(&mut clf, contract, train, val, cfg)?;
    Ok((ae, clf, h1, h2))
}

/// Builds and trains `recipe` on features already normalised with
/// `normalizers`.
pub fn train_recipe(
    recipe: &ModelRecipe,
    train: &[UtteranceFeatures],
    val: &[UtteranceFeatures],
    cfg: &TrainConfig,
    normalizers: Vec<Normalizer>,
    pretrained: Option<&TrainedModel>,
) -> Result<TrainOutcome> {
    let contract = recipe.contract(pretrained)?;
    let meta = |kind| ModelMeta {
        kind,
        contract: contract.clone(),
        normalizers: normalizers.clone(),
        width_scale: recipe.options.width_scale,
    };
    let o = &recipe.options;
    let (mut graph, autoencoder, mut histories) = match recipe.kind {
        ModelKind::BrnnE2e => (build_brnn(&recipe.brnn())?, None, Vec::new()),
        ModelKind::RyantDnn => (build_ryant_dnn(o)?, None, Vec::new()),
        ModelKind::Tao2017Brnn => (build_tao2017(o)?, None, Vec::new()),
        ModelKind::AriavAeRnn => {
            let (ae, clf, h1, h2) = train_ariav(&contract, train, val, cfg, o)?;
            let model = TrainedModel::new(clf, meta(recipe.kind))?;
            return Ok(TrainOutcome {
                model,
                autoencoder: Some(ae),
                histories: vec![h1, h2],
            });
        }
        ModelKind::AudioOnly | ModelKind::VideoOnly => {
            let m = build_unimodal(recipe.kind, pretrained, o)?;
            (m.graph, None, Vec::new())
        }
    };
    histories.push(train_model(&mut graph, &contract, train, val, cfg)?);
    Ok(TrainOutcome {
        model: TrainedModel::new(graph, meta(recipe.kind))?,
        autoencoder,
        histories,
    })
}
