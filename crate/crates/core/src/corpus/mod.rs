//! Deterministic synthetic audiovisual corpus: speaker profiles, utterance
//! synthesis, channel and noise degradation, dataset files and the
//! energy-threshold sanity scorer.

mod condition;
mod degrade;
pub mod dsp;
mod io;
mod oracle;
mod profile;
pub mod seed;
mod synth;

pub use condition::{Channel, Condition, Env};
pub use degrade::{babble, degrade, noise_gain, speech_samples, PRACTICAL_BLUR, PRACTICAL_CUTOFF_HZ, PRACTICAL_LANDMARK_NOISE};
pub use io::{
    read_avf, read_labels, read_manifest, read_wav, write_avf, write_labels, write_manifest, write_wav, AvfHeader,
};
pub use oracle::{frame_log_energy, EnergyOracle};
pub use profile::{Gender, SpeakerProfile};
pub use synth::{generate_utterance, mouth_heights, SEGMENT_RANGE, SOURCE_SCALE};

use crate::audio::{frame_count, Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::video::{read_landmark_csv, write_landmark_csv, Image, LandmarkTrack};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const FPS: u32 = 30;
pub const IMAGE_W: usize = 64;
pub const IMAGE_H: usize = 76;
pub const STEP_HOP: usize = 160;
pub const STEP_WIN: usize = 400;

/// A labelled stretch of an utterance, in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub speech: bool,
}

/// One recording under one condition.
#[derive(Clone, Debug, PartialEq)]
pub struct AVUtterance {
    pub utt_id: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub condition: Condition,
    pub audio: Waveform,
    pub frames: Vec<Image>,
    pub landmarks: LandmarkTrack,
    pub segments: Vec<Segment>,
}

impl AVUtterance {
    pub fn duration(&self) -> f64 {
        self.audio.duration_secs()
    }

    /// Labels for every full 10 ms analysis step of the audio.
    pub fn step_labels(&self) -> Vec<u8> {
        let steps = frame_count(self.audio.len(), STEP_WIN, STEP_HOP).unwrap_or(0);
        rasterize_labels(&self.segments, steps)
    }
}

/// Step `t` covers samples `[160 t, 160 t + 400)` and is speech when at
/// least half of that window lies inside speech segments.
pub fn rasterize_labels(segments: &[Segment], steps: usize) -> Vec<u8> {
    let sr = SAMPLE_RATE as f64;
    let speech: Vec<(usize, usize)> = segments
        .iter()
        .filter(|s| s.speech)
        .map(|s| ((s.start * sr).round() as usize, (s.end * sr).round() as usize))
        .collect();
    (0..steps)
        .map(|t| {
            let (a, b) = (t * STEP_HOP, t * STEP_HOP + STEP_WIN);
            let overlap: usize = speech.iter().map(|&(s, e)| e.min(b).saturating_sub(s.max(a))).sum();
            u8::from(2 * overlap >= STEP_WIN)
        })
        .collect()
}

/// Manifest entry; paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub condition: Condition,
    pub wav: PathBuf,
    pub frames: PathBuf,
    pub landmarks: PathBuf,
    pub labels: PathBuf,
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub speakers: usize,
    pub utts_per_speaker: usize,
    pub seed: u64,
    pub duration_range: [f64; 2],
    /// Chance that an utterance loses a few landmark frames.
    pub dropout_chance: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            speakers: 26,
            utts_per_speaker: 3,
            seed: 1,
            duration_range: [6.0, 9.0],
            dropout_chance: 0.3,
        }
    }
}

fn content_seed(cfg: &CorpusConfig, speaker: usize, utt: usize) -> u64 {
    seed::derive_seed(&[cfg.seed, seed::stream::CONTENT, speaker as u64, utt as u64])
}

/// Clean utterance `utt` of speaker `speaker`, with the sporadic landmark
/// losses the detector would produce.
pub fn corpus_utterance(cfg: &CorpusConfig, speaker: usize, utt: usize) -> AVUtterance {
    let profile = SpeakerProfile::generate(cfg.seed, speaker);
    let s = content_seed(cfg, speaker, utt);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s ^ 0xD00D);
    let duration = (rng.random_range(cfg.duration_range[0]..=cfg.duration_range[1]) * 10.0).round() / 10.0;
    let id = format!("{}_u{utt:02}", profile.speaker_id);
    let mut u = generate_utterance(&profile, &id, duration, s);
    if rng.random_bool(cfg.dropout_chance) {
        let frames = u.landmarks.frames();
        let lost = rng.random_range(1..=(frames / 40).max(1));
        for _ in 0..lost {
            let t = rng.random_range(0..frames);
            u.landmarks.missing[t] = true;
        }
    }
    u
}

pub fn condition_utterance(cfg: &CorpusConfig, clean: &AVUtterance, speaker: usize, utt: usize, condition: Condition) -> AVUtterance {
    let s = seed::derive_seed(&[cfg.seed, seed::stream::DEGRADE, speaker as u64, utt as u64]);
    degrade(clean, condition, s)
}

/// Writes every utterance in all four conditions plus `manifest.jsonl`.
pub fn generate_corpus(cfg: &CorpusConfig, out_dir: &Path) -> Result<Vec<UtteranceRecord>> {
    if cfg.speakers < 3 {
        return Err(Error::Input(format!("need at least 3 speakers, got {}", cfg.speakers)));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records = Vec::new();
    for spk in 0..cfg.speakers {
        let profile = SpeakerProfile::generate(cfg.seed, spk);
        let dir = out_dir.join(&profile.speaker_id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for utt in 0..cfg.utts_per_speaker {
            let clean = corpus_utterance(cfg, spk, utt);
            let rel = |name: String| PathBuf::from(&profile.speaker_id).join(name);
            let labels = rel(format!("{}.labels.txt", clean.utt_id));
            write_labels(&clean.segments, &out_dir.join(&labels))?;
            for channel in [Channel::Ideal, Channel::Practical] {
                let frames = rel(format!("{}.{channel}.avf", clean.utt_id));
                let landmarks = rel(format!("{}.{channel}.lm.csv", clean.utt_id));
                for env in [Env::Clean, Env::Noisy] {
                    let condition = Condition { channel, env };
                    let u = condition_utterance(cfg, &clean, spk, utt, condition);
                    if env == Env::Clean {
                        write_avf(&u.frames, (FPS, 1), &out_dir.join(&frames))?;
                        write_landmark_csv(&u.landmarks, &out_dir.join(&landmarks))?;
                    }
                    let wav = rel(format!("{}.{condition}.wav", clean.utt_id));
                    write_wav(&u.audio, &out_dir.join(&wav))?;
                    records.push(UtteranceRecord {
                        utt_id: clean.utt_id.clone(),
                        speaker_id: profile.speaker_id.clone(),
                        gender: profile.gender,
                        condition,
                        wav,
                        frames: frames.clone(),
                        landmarks: landmarks.clone(),
                        labels: labels.clone(),
                        duration: u.duration(),
                    });
                }
            }
        }
    }
    write_manifest(&records, &out_dir.join("manifest.jsonl"))?;
    Ok(records)
}

/// Reads and cross-checks the files of one manifest row.
pub fn load_utterance(record: &UtteranceRecord, root: &Path) -> Result<AVUtterance> {
    let wav_path = root.join(&record.wav);
    let audio = read_wav(&wav_path)?;
    let frames_path = root.join(&record.frames);
    let (header, frames) = read_avf(&frames_path)?;
    let landmarks: LandmarkTrack = read_landmark_csv(&root.join(&record.landmarks), (header.fps_num, header.fps_den))?;
    if landmarks.frames() != frames.len() {
        return Err(Error::format(
            root.join(&record.landmarks),
            0,
            format!("{} landmark rows for {} video frames", landmarks.frames(), frames.len()),
        ));
    }
    let fps = header.fps_num as f64 / header.fps_den as f64;
    let video_secs = frames.len() as f64 / fps;
    if (video_secs - audio.duration_secs()).abs() > 1.0 / fps + 1e-9 {
        return Err(Error::format(
            &frames_path,
            0,
            format!("video lasts {video_secs:.3} s but audio {:.3} s", audio.duration_secs()),
        ));
    }
    let segments = read_labels(&root.join(&record.labels))?;
    Ok(AVUtterance {
        utt_id: record.utt_id.clone(),
        speaker_id: record.speaker_id.clone(),
        gender: record.gender,
        condition: record.condition,
        audio,
        frames,
        landmarks,
        segments,
    })
}
