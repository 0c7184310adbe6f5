//! Model-facing features: extraction from an utterance, zero-order hold of
//! video-rate streams onto the 10 ms step, normalisation and assembly of
//! time-major graph inputs.

use crate::audio::{frame_signal, mel_filterbank, mfcc, sadjadi_features, spectrogram_tukey, AcousticConfig, FeatureSequence};
use crate::corpus::{rasterize_labels, AVUtterance, STEP_HOP, STEP_WIN};
use crate::error::{Error, Result};
use crate::nn::{GraphInput, GraphSpec, StreamData, StreamKind, Tensor};
use crate::video::{handcrafted_visual_vector, interpolate_landmarks, normalize_frames, optical_flow_variance, LandmarkSchema, ROI};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Acoustic context: the current frame plus ten preceding ones.
pub const CONTEXT: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Mel,
    Mfcc,
    Spec,
    Sadjadi,
    Visual26,
    FlowVar,
    Roi,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 7] = [
        FeatureKind::Mel,
        FeatureKind::Mfcc,
        FeatureKind::Spec,
        FeatureKind::Sadjadi,
        FeatureKind::Visual26,
        FeatureKind::FlowVar,
        FeatureKind::Roi,
    ];

    /// Width of one frame of this feature.
    pub fn dim(self) -> usize {
        match self {
            FeatureKind::Mel => 26,
            FeatureKind::Mfcc => 13,
            FeatureKind::Spec => 320,
            FeatureKind::Sadjadi => 5,
            FeatureKind::Visual26 => 26,
            FeatureKind::FlowVar => 3,
            FeatureKind::Roi => ROI * ROI,
        }
    }

    pub fn is_visual(self) -> bool {
        matches!(self, FeatureKind::Visual26 | FeatureKind::FlowVar | FeatureKind::Roi)
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mel => "mel",
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Spec => "spec",
            FeatureKind::Sadjadi => "sadjadi",
            FeatureKind::Visual26 => "visual26",
            FeatureKind::FlowVar => "flowvar",
            FeatureKind::Roi => "roi",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown feature kind {s:?} (expected mel|mfcc|spec|sadjadi|visual26|flowvar|roi)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturePart {
    pub feature: FeatureKind,
    /// Frames stacked per step, oldest first.
    pub context: usize,
}

/// One graph input stream: concatenated parts, or a lone ROI part.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamContract {
    pub name: String,
    pub parts: Vec<FeaturePart>,
}

impl StreamContract {
    pub fn new(name: &str, parts: &[(FeatureKind, usize)]) -> Self {
        StreamContract {
            name: name.into(),
            parts: parts.iter().map(|&(feature, context)| FeaturePart { feature, context }).collect(),
        }
    }

    pub fn is_frames(&self) -> bool {
        self.parts.iter().any(|p| p.feature == FeatureKind::Roi)
    }

    pub fn dim(&self) -> usize {
        self.parts.iter().map(|p| p.feature.dim() * p.context).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureContract {
    pub streams: Vec<StreamContract>,
}

impl FeatureContract {
    /// Distinct features needed, in canonical order.
    pub fn features(&self) -> Vec<FeatureKind> {
        let mut v: Vec<FeatureKind> = self.streams.iter().flat_map(|s| s.parts.iter().map(|p| p.feature)).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Checks that the contract produces exactly the graph's input streams.
    pub fn check(&self, spec: &GraphSpec) -> Result<()> {
        if self.streams.len() != spec.streams.len() {
            return Err(Error::Dimension(format!(
                "feature contract has {} streams, model takes {}",
                self.streams.len(),
                spec.streams.len()
            )));
        }
        for (c, s) in self.streams.iter().zip(&spec.streams) {
            let ok = match s.kind {
                StreamKind::Sequence { dim } => !c.is_frames() && c.dim() == dim,
                StreamKind::Frames { channels, height, width } => {
                    c.is_frames() && c.parts.len() == 1 && (channels, height, width) == (1, ROI, ROI)
                }
            };
            if !ok {
                return Err(Error::Dimension(format!(
                    "stream {}: features {:?} do not fit model input {:?}",
                    s.name, c.parts, s.kind
                )));
            }
        }
        Ok(())
    }
}

/// Mouth ROIs at the video rate with the step-to-frame hold index.
#[derive(Clone, Debug, PartialEq)]
pub struct RoiTrack {
    /// `n * 1024` pixels.
    pub pixels: Vec<f64>,
    pub index: Vec<usize>,
}

impl RoiTrack {
    pub fn frames(&self) -> usize {
        self.pixels.len() / (ROI * ROI)
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.pixels[i * ROI * ROI..(i + 1) * ROI * ROI]
    }
}

/// Extracted features for one utterance, every sequence at the step rate.
#[derive(Clone, Debug)]
pub struct UtteranceFeatures {
    pub utt_id: String,
    pub speaker_id: String,
    pub steps: usize,
    pub labels: Vec<u8>,
    pub sequences: BTreeMap<FeatureKind, FeatureSequence>,
    pub rois: Option<RoiTrack>,
}

impl UtteranceFeatures {
    pub fn sequence(&self, k: FeatureKind) -> Result<&FeatureSequence> {
        self.sequences
            .get(&k)
            .ok_or_else(|| Error::Input(format!("utterance {} lacks {k} features", self.utt_id)))
    }

    pub fn roi_track(&self) -> Result<&RoiTrack> {
        self.rois
            .as_ref()
            .ok_or_else(|| Error::Input(format!("utterance {} lacks roi features", self.utt_id)))
    }
}

/// For each step, the latest video frame whose timestamp does not exceed
/// the end of the step's analysis window.
pub fn hold_index(steps: usize, frames: usize, fps: (u32, u32)) -> Vec<usize> {
    let (num, den) = (fps.0 as u64, fps.1 as u64);
    let sr = crate::audio::SAMPLE_RATE as u64;
    (0..steps)
        .map(|t| {
            let end = (t * STEP_HOP + STEP_WIN) as u64;
            let k = (end * num / (sr * den)) as usize;
            k.min(frames.saturating_sub(1))
        })
        .collect()
}

fn hold(seq: &FeatureSequence, index: &[usize]) -> FeatureSequence {
    let mut values = Vec::with_capacity(index.len() * seq.dim);
    for &i in index {
        values.extend_from_slice(seq.row(i));
    }
    FeatureSequence::new(seq.utt_id.clone(), seq.dim, values)
}

fn truncate(mut seq: FeatureSequence, steps: usize) -> FeatureSequence {
    seq.values.truncate(steps * seq.dim);
    seq
}

/// Extracts `kinds` from `u`. Visual features first interpolate the
/// landmark track, so a track with too many missing frames is rejected.
pub fn extract_features(
    u: &AVUtterance,
    kinds: &[FeatureKind],
    cfg: &AcousticConfig,
    schema: &LandmarkSchema,
) -> Result<UtteranceFeatures> {
    let frames = frame_signal(&u.audio, cfg)?;
    let mut steps = frames.frames();
    let mut sequences = BTreeMap::new();
    for &k in kinds {
        let seq = match k {
            FeatureKind::Mel => mel_filterbank(&frames, cfg)?,
            FeatureKind::Mfcc => mfcc(&frames, cfg)?,
            FeatureKind::Spec => spectrogram_tukey(&frames, cfg)?,
            FeatureKind::Sadjadi => sadjadi_features(&u.audio, cfg)?,
            _ => continue,
        };
        steps = steps.min(seq.len());
        sequences.insert(k, seq);
    }
    let mut rois = None;
    if kinds.iter().any(|k| k.is_visual()) {
        let track = interpolate_landmarks(&u.landmarks)?;
        let vf = normalize_frames(&u.frames, &track, schema)?;
        let index = hold_index(steps, vf.frames(), track.fps);
        for &k in kinds {
            match k {
                FeatureKind::Visual26 => {
                    let seq = handcrafted_visual_vector(&vf, schema)?;
                    sequences.insert(k, hold(&seq, &index));
                }
                FeatureKind::FlowVar => {
                    let mut values = vec![0.0; 3];
                    for t in 1..vf.frames() {
                        values.extend(optical_flow_variance(&vf.rois[t - 1], &vf.rois[t]));
                    }
                    sequences.insert(k, hold(&FeatureSequence::new("", 3, values), &index));
                }
                FeatureKind::Roi => {
                    let pixels = vf.rois.iter().flat_map(|r| r.data.iter().copied()).collect();
                    rois = Some(RoiTrack { pixels, index: index.clone() });
                }
                _ => {}
            }
        }
    }
    let sequences = sequences
        .into_iter()
        .map(|(k, s)| {
            let mut s = truncate(s, steps);
            s.utt_id = u.utt_id.clone();
            (k, s)
        })
        .collect();
    Ok(UtteranceFeatures {
        utt_id: u.utt_id.clone(),
        speaker_id: u.speaker_id.clone(),
        steps,
        labels: rasterize_labels(&u.segments, steps),
        sequences,
        rois,
    })
}

/// Per-dimension standardisation fitted on training data. ROIs use one
/// scalar mean and deviation over all pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub feature: FeatureKind,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Deviations at or below this are treated as 1.
const STD_FLOOR: f64 = 1e-8;

fn moments<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> (Vec<f64>, Vec<f64>) {
    let mut n = 0usize;
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for r in rows {
        n += r.len() / dim;
        for (i, x) in r.iter().enumerate() {
            sum[i % dim] += x;
            sq[i % dim] += x * x;
        }
    }
    (0..dim)
        .map(|j| {
            if n == 0 {
                return (0.0, 1.0);
            }
            let m = sum[j] / n as f64;
            let sd = (sq[j] / n as f64 - m * m).max(0.0).sqrt();
            (m, if sd <= STD_FLOOR { 1.0 } else { sd })
        })
        .unzip()
}

impl Normalizer {
    pub fn fit(feature: FeatureKind, utts: &[UtteranceFeatures]) -> Result<Self> {
        let (mean, std) = if feature == FeatureKind::Roi {
            let mut tracks = Vec::with_capacity(utts.len());
            for u in utts {
                tracks.push(u.roi_track()?.pixels.as_slice());
            }
            moments(1, tracks.into_iter())
        } else {
            let mut seqs = Vec::with_capacity(utts.len());
            for u in utts {
                seqs.push(u.sequence(feature)?);
            }
            moments(feature.dim(), seqs.iter().flat_map(|s| (0..s.len()).map(move |t| s.row(t))))
        };
        Ok(Normalizer { feature, mean, std })
    }

    pub fn apply(&self, u: &mut UtteranceFeatures) -> Result<()> {
        if self.feature == FeatureKind::Roi {
            let track = u
                .rois
                .as_mut()
                .ok_or_else(|| Error::Input(format!("utterance {} lacks roi features", u.utt_id)))?;
            for v in &mut track.pixels {
                *v = (*v - self.mean[0]) / self.std[0];
            }
            return Ok(());
        }
        let id = u.utt_id.clone();
        let seq = u
            .sequences
            .get_mut(&self.feature)
            .ok_or_else(|| Error::Input(format!("utterance {id} lacks {} features", self.feature)))?;
        if seq.dim != self.mean.len() {
            return Err(Error::Dimension(format!(
                "{} normaliser is {}D, features are {}D",
                self.feature,
                self.mean.len(),
                seq.dim
            )));
        }
        for row in seq.values.chunks_mut(seq.dim) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(())
    }
}

/// Fits one normaliser per feature of `contract` on `train`.
pub fn fit_normalizers(contract: &FeatureContract, train: &[UtteranceFeatures]) -> Result<Vec<Normalizer>> {
    contract.features().into_iter().map(|k| Normalizer::fit(k, train)).collect()
}

pub fn apply_normalizers(norms: &[Normalizer], utts: &mut [UtteranceFeatures]) -> Result<()> {
    for u in utts {
        for n in norms {
            n.apply(u)?;
        }
    }
    Ok(())
}

/// A span of steps of one utterance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chunk {
    pub utt: usize,
    pub start: usize,
    pub len: usize,
}

/// Graph input for a batch of chunks padded to `steps`: rows are time-major
/// (`row = s * batch + b`), padded rows carry zero features, label 0 and
/// mask 0.
#[derive(Clone, Debug)]
pub struct Batch {
    pub input: GraphInput,
    pub labels: Vec<u8>,
    pub mask: Vec<f64>,
}

impl Batch {
    pub fn valid_steps(&self) -> usize {
        self.mask.iter().filter(|&&m| m > 0.0).count()
    }
}

pub fn assemble(contract: &FeatureContract, utts: &[UtteranceFeatures], chunks: &[Chunk], steps: usize) -> Result<Batch> {
    let batch = chunks.len();
    let rows = steps * batch;
    let mut labels = vec![0u8; rows];
    let mut mask = vec![0.0; rows];
    for (b, c) in chunks.iter().enumerate() {
        let u = utts
            .get(c.utt)
            .ok_or_else(|| Error::Input(format!("chunk references utterance {}", c.utt)))?;
        if c.len > steps || c.start + c.len > u.steps {
            return Err(Error::Input(format!("chunk {c:?} exceeds utterance {}", u.utt_id)));
        }
        for s in 0..c.len {
            labels[s * batch + b] = u.labels[c.start + s];
            mask[s * batch + b] = 1.0;
        }
    }
    let mut streams = Vec::with_capacity(contract.streams.len());
    for sc in &contract.streams {
        if sc.is_frames() {
            let mut pixels = Vec::new();
            let mut index = vec![0usize; rows];
            let mut base = 0;
            for (b, c) in chunks.iter().enumerate() {
                let track = utts[c.utt].roi_track()?;
                let held = &track.index[c.start..c.start + c.len];
                let (lo, hi) = (held[0], *held.last().expect("non-empty chunk"));
                for f in lo..=hi {
                    pixels.extend_from_slice(track.frame(f));
                }
                for s in 0..steps {
                    let f = held[s.min(c.len - 1)];
                    index[s * batch + b] = base + f - lo;
                }
                base += hi - lo + 1;
            }
            let frames = Tensor::from_vec(&[base, 1, ROI, ROI], pixels)?;
            streams.push(StreamData::Frames { frames, index });
        } else {
            let dim = sc.dim();
            let mut data = vec![0.0; rows * dim];
            for (b, c) in chunks.iter().enumerate() {
                let u = &utts[c.utt];
                let mut seqs = Vec::with_capacity(sc.parts.len());
                for p in &sc.parts {
                    seqs.push((u.sequence(p.feature)?, p.context));
                }
                for s in 0..c.len {
                    let t = c.start + s;
                    let row = &mut data[(s * batch + b) * dim..(s * batch + b + 1) * dim];
                    let mut off = 0;
                    for &(seq, ctx) in &seqs {
                        for k in (0..ctx).rev() {
                            let src = seq.row(t.saturating_sub(k));
                            row[off..off + seq.dim].copy_from_slice(src);
                            off += seq.dim;
                        }
                    }
                }
            }
            streams.push(StreamData::Sequence(Tensor::from_vec(&[rows, dim], data)?));
        }
    }
    Ok(Batch {
        input: GraphInput { steps, batch, streams },
        labels,
        mask,
    })
}

/// The whole utterance as a single-row batch.
pub fn assemble_utterance(contract: &FeatureContract, u: &UtteranceFeatures) -> Result<Batch> {
    if u.steps == 0 {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let chunk = Chunk {
        utt: 0,
        start: 0,
        len: u.steps,
    };
    assemble(contract, std::slice::from_ref(u), &[chunk], u.steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{corpus_utterance, CorpusConfig};

    fn toy(steps: usize, dim: usize) -> UtteranceFeatures {
        let values = (0..steps * dim).map(|i| i as f64).collect();
        let mut sequences = BTreeMap::new();
        sequences.insert(FeatureKind::Sadjadi, FeatureSequence::new("u", dim, values));
        UtteranceFeatures {
            utt_id: "u".into(),
            speaker_id: "s".into(),
            steps,
            labels: (0..steps).map(|t| (t % 2) as u8).collect(),
            sequences,
            rois: Some(RoiTrack {
                pixels: (0..4 * ROI * ROI).map(|i| (i / (ROI * ROI)) as f64).collect(),
                index: (0..steps).map(|t| (t / 3).min(3)).collect(),
            }),
        }
    }

    #[test]
    fn hold_index_follows_window_end() {
        // Window ends at 25, 35, 45, 55, 65, 75 ms; frames start every 33.3 ms.
        let idx = hold_index(6, 100, (30, 1));
        assert_eq!(idx, vec![0, 1, 1, 1, 1, 2]);
        assert_eq!(hold_index(3, 1, (30, 1)), vec![0, 0, 0]);
    }

    #[test]
    fn context_rows_stack_oldest_first() {
        let u = toy(5, 5);
        let c = FeatureContract {
            streams: vec![StreamContract::new("a", &[(FeatureKind::Sadjadi, 3)])],
        };
        let b = assemble(&c, &[u], &[Chunk { utt: 0, start: 2, len: 2 }], 3).unwrap();
        let StreamData::Sequence(t) = &b.input.streams[0] else { panic!() };
        assert_eq!(t.shape(), &[3, 15]);
        // Step 2 stacks steps 0, 1, 2.
        assert_eq!(t.row(0)[0], 0.0);
        assert_eq!(t.row(0)[5], 5.0);
        assert_eq!(t.row(0)[10], 10.0);
        assert!(t.row(2).iter().all(|&v| v == 0.0));
        assert_eq!(b.mask, vec![1.0, 1.0, 0.0]);
        assert_eq!(b.labels, vec![0, 1, 0]);
    }

    #[test]
    fn frame_batches_gather_only_needed_frames() {
        let u = toy(12, 5);
        let c = FeatureContract {
            streams: vec![StreamContract::new("v", &[(FeatureKind::Roi, 1)])],
        };
        let chunks = [Chunk { utt: 0, start: 4, len: 4 }, Chunk { utt: 0, start: 0, len: 2 }];
        let b = assemble(&c, &[u.clone(), u], &chunks, 4).unwrap();
        let StreamData::Frames { frames, index } = &b.input.streams[0] else { panic!() };
        // Chunk 0 holds frames 1..=2, chunk 1 frame 0.
        assert_eq!(frames.shape(), &[3, 1, ROI, ROI]);
        assert_eq!(frames.row(0)[0], 1.0);
        assert_eq!(frames.row(2)[0], 0.0);
        assert_eq!(index, &vec![0, 2, 0, 2, 1, 2, 1, 2]);
    }

    #[test]
    fn normalizer_standardises_training_columns() {
        let u = toy(7, 5);
        let n = Normalizer::fit(FeatureKind::Sadjadi, std::slice::from_ref(&u)).unwrap();
        let mut v = vec![u];
        apply_normalizers(&[n], &mut v).unwrap();
        let s = v[0].sequence(FeatureKind::Sadjadi).unwrap();
        for j in 0..5 {
            let col: Vec<f64> = (0..7).map(|t| s.row(t)[j]).collect();
            let m = col.iter().sum::<f64>() / 7.0;
            let var = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 7.0;
            assert!(m.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn roi_normalizer_is_scalar() {
        let u = toy(4, 5);
        let n = Normalizer::fit(FeatureKind::Roi, std::slice::from_ref(&u)).unwrap();
        assert_eq!(n.mean.len(), 1);
        // Frames hold the constants 0, 1, 2, 3.
        assert!((n.mean[0] - 1.5).abs() < 1e-12);
        assert!((n.std[0] - 1.25f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn extraction_aligns_every_stream() {
        let cfg = CorpusConfig::default();
        let mut u = corpus_utterance(&cfg, 0, 0);
        let keep = 16_000 * 3;
        u.audio.samples.truncate(keep);
        u.frames.truncate(90);
        u.landmarks.points.truncate(90 * crate::video::N_LANDMARKS);
        u.landmarks.missing.truncate(90);
        let f = extract_features(&u, &FeatureKind::ALL, &AcousticConfig::default(), &LandmarkSchema::default()).unwrap();
        assert_eq!(f.steps, 1 + (keep - 400) / 160);
        for (k, s) in &f.sequences {
            assert_eq!(s.len(), f.steps, "{k}");
            assert_eq!(s.dim, k.dim());
            assert!(s.is_finite());
        }
        assert_eq!(f.labels.len(), f.steps);
        let r = f.rois.unwrap();
        assert_eq!(r.frames(), 90);
        assert_eq!(r.index.len(), f.steps);
        assert!(r.index.windows(2).all(|w| w[0] <= w[1]));
    }
}
