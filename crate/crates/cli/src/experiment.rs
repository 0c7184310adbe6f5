//! Manifest-driven feature loading and per-speaker scoring.

use avsad::audio::AcousticConfig;
use avsad::corpus::{load_utterance, read_manifest, Condition, UtteranceRecord};
use avsad::eval::{frame_metrics, EvalReport, SpeakerScore};
use avsad::features::{apply_normalizers, extract_features, FeatureKind, UtteranceFeatures};
use avsad::train::SplitSpec;
use avsad::video::LandmarkSchema;
use avsad::zoo::{predict_graph, TrainedModel};
use avsad::{Error, Result};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Worker count from `AVSAD_THREADS`, default 1.
pub fn thread_count() -> usize {
    std::env::var("AVSAD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Maps `f` over `items` on up to `threads` workers; output order matches
/// input order.
pub fn parallel_map<T: Sync, U: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

pub struct Manifest {
    pub root: PathBuf,
    pub records: Vec<UtteranceRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let records = read_manifest(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Manifest { root, records })
    }

    /// Records of `speakers` under `condition`, in manifest order.
    pub fn select(&self, speakers: &[String], condition: Condition) -> Vec<&UtteranceRecord> {
        self.records
            .iter()
            .filter(|r| r.condition == condition && speakers.contains(&r.speaker_id))
            .collect()
    }
}

/// Features of each record. Utterances whose landmark track fails the
/// missing-frame rule are dropped and their ids returned.
pub fn extract_records(
    records: &[&UtteranceRecord],
    root: &Path,
    kinds: &[FeatureKind],
    threads: usize,
) -> Result<(Vec<UtteranceFeatures>, Vec<String>)> {
    let cfg = AcousticConfig::default();
    let schema = LandmarkSchema::default();
    let results = parallel_map(records, threads, |r| {
        let u = load_utterance(r, root)?;
        extract_features(&u, kinds, &cfg, &schema)
    });
    let mut feats = Vec::with_capacity(results.len());
    let mut rejected = Vec::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(f) => feats.push(f),
            Err(Error::Rejected { .. }) => rejected.push(r.utt_id.clone()),
            Err(e) => return Err(e),
        }
    }
    Ok((feats, rejected))
}

/// Loads, extracts and normalises test utterances for `model`.
pub fn model_features(
    model: &TrainedModel,
    records: &[&UtteranceRecord],
    root: &Path,
    threads: usize,
) -> Result<Vec<UtteranceFeatures>> {
    let (mut feats, _) = extract_records(records, root, &model.meta.contract.features(), threads)?;
    apply_normalizers(&model.meta.normalizers, &mut feats)?;
    Ok(feats)
}

/// Scores `model` on already normalised utterances, pooling frame counts
/// per speaker.
pub fn evaluate(model: &TrainedModel, name: &str, condition: Condition, utts: &[UtteranceFeatures]) -> Result<EvalReport> {
    let mut graph = model.graph.clone();
    let mut per: BTreeMap<String, avsad::eval::FrameMetrics> = BTreeMap::new();
    for u in utts {
        let p = predict_graph(&mut graph, &model.meta.contract, u)?;
        let m = frame_metrics(&p.labels, &u.labels)?;
        per.entry(u.speaker_id.clone())
            .and_modify(|acc| *acc = acc.merge(&m))
            .or_insert(m);
    }
    let speakers = per.into_iter().map(|(id, metrics)| SpeakerScore { id, metrics }).collect();
    EvalReport::new(name, condition, speakers)
}

/// Split file: the three speaker lists as JSON.
pub fn write_split(split: &SplitSpec, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(split).expect("split serialises");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
