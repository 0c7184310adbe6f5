use super::TrainedModel;
use crate::error::{Error, Result};
use crate::features::{assemble_utterance, FeatureContract, UtteranceFeatures};
use crate::nn::{softmax_rows, ModelGraph, Objective};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-step speech probability and hard decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Runs `graph` in inference mode over one utterance.
pub fn predict_graph(graph: &mut ModelGraph, contract: &FeatureContract, u: &UtteranceFeatures) -> Result<Prediction> {
    if graph.spec().objective != Objective::Classify {
        return Err(Error::Input("model is not a classifier".into()));
    }
    contract.check(graph.spec())?;
    let batch = assemble_utterance(contract, u)?;
    let logits = graph.forward(&batch.input, false, false, &mut ChaCha8Rng::seed_from_u64(0))?;
    let p = softmax_rows(&logits);
    let probs: Vec<f64> = (0..p.rows()).map(|r| p.row(r)[1]).collect();
    let labels = probs.iter().map(|&q| u8::from(q > 0.5)).collect();
    Ok(Prediction { probs, labels })
}

/// Inference on a private copy of the model, leaving `model` untouched.
pub fn predict(model: &TrainedModel, u: &UtteranceFeatures) -> Result<Prediction> {
    let mut g = model.graph.clone();
    predict_graph(&mut g, &model.meta.contract, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureKind, RoiTrack};
    use crate::audio::FeatureSequence;
    use crate::zoo::{build_brnn, BrnnConfig, ModelKind, ModelMeta};
    use rand::Rng;
    use std::collections::BTreeMap;

    fn features(steps: usize, seed: u64) -> UtteranceFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mel = (0..steps * 26).map(|_| rng.random_range(-1.0..1.0)).collect();
        let frames = steps / 3 + 1;
        let pixels = (0..frames * 1024).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut sequences = BTreeMap::new();
        sequences.insert(FeatureKind::Mel, FeatureSequence::new("u", 26, mel));
        UtteranceFeatures {
            utt_id: "u".into(),
            speaker_id: "s".into(),
            steps,
            labels: vec![0; steps],
            sequences,
            rois: Some(RoiTrack {
                pixels,
                index: (0..steps).map(|t| t / 3).collect(),
            }),
        }
    }

    fn model() -> TrainedModel {
        let cfg = BrnnConfig::with_scale(0.125);
        let meta = ModelMeta {
            kind: ModelKind::BrnnE2e,
            contract: cfg.contract(),
            normalizers: Vec::new(),
            width_scale: 0.125,
        };
        TrainedModel::new(build_brnn(&cfg).unwrap(), meta).unwrap()
    }

    #[test]
    fn zeroed_output_layer_gives_one_half() {
        let mut m = model();
        let last = m.graph.spec().subnets.len() - 1;
        let count = m.graph.subnet_params(last).count();
        for (k, p) in m.graph.subnet_params_mut(last).enumerate() {
            if k + 2 >= count {
                p.value.fill(0.0);
            }
        }
        let p = predict(&m, &features(20, 1)).unwrap();
        assert_eq!(p.probs.len(), 20);
        assert!(p.probs.iter().all(|&q| q == 0.5));
        assert!(p.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn probabilities_are_proper() {
        let m = model();
        let u = features(30, 2);
        let p = predict(&m, &u).unwrap();
        assert_eq!(p.probs.len(), u.steps);
        assert!(p.probs.iter().all(|&q| q > 0.0 && q < 1.0));
        let mut g = m.graph.clone();
        let b = assemble_utterance(&m.meta.contract, &u).unwrap();
        let z = g.forward(&b.input, false, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let s = softmax_rows(&z);
        for r in 0..s.rows() {
            assert!((s.row(r)[0] + s.row(r)[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn contract_mismatch_is_dimension_error() {
        let mut m = model();
        m.meta.contract.streams.truncate(1);
        assert!(matches!(predict(&m, &features(10, 3)), Err(Error::Dimension(_))));
    }
}
