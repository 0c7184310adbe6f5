use super::spectrum::PowerSpectrum;
use super::{AcousticConfig, FeatureSequence, FrameMatrix, SAMPLE_RATE};
use crate::error::Result;
use std::f64::consts::PI;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn mel_points(n_mels: usize) -> Vec<f64> {
    let lo = hz_to_mel(0.0);
    let hi = hz_to_mel(SAMPLE_RATE as f64 / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Nominal centre frequency of each triangular filter.
pub fn mel_filter_centers_hz(cfg: &AcousticConfig) -> Vec<f64> {
    mel_points(cfg.n_mels)[1..=cfg.n_mels].to_vec()
}

/// Triangular filters on FFT bins `floor((n_fft + 1) * hz / sr)`.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    pub n_bins: usize,
    /// `n_mels x n_bins`, row-major.
    pub weights: Vec<f64>,
    pub edges: Vec<usize>,
}

impl MelFilterbank {
    pub fn new(cfg: &AcousticConfig) -> Self {
        let n_bins = cfg.n_fft_mel / 2 + 1;
        let edges: Vec<usize> = mel_points(cfg.n_mels)
            .iter()
            .map(|hz| ((cfg.n_fft_mel + 1) as f64 * hz / SAMPLE_RATE as f64).floor() as usize)
            .collect();
        let mut weights = vec![0.0; cfg.n_mels * n_bins];
        for j in 0..cfg.n_mels {
            let (l, c, r) = (edges[j], edges[j + 1], edges[j + 2]);
            let row = &mut weights[j * n_bins..(j + 1) * n_bins];
            for i in l..c {
                row[i] = (i - l) as f64 / (c - l) as f64;
            }
            for i in c..r.min(n_bins) {
                row[i] = (r - i) as f64 / (r - c) as f64;
            }
        }
        MelFilterbank { n_bins, weights, edges }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len() / self.n_bins
    }

    pub fn apply(&self, power: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks(self.n_bins)
                .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum::<f64>()),
        );
    }
}

/// Natural-log Mel filterbank energies, floored at `log_floor`.
pub fn mel_filterbank(frames: &FrameMatrix, cfg: &AcousticConfig) -> Result<FeatureSequence> {
    let (values, _) = mel_and_energy(frames, cfg);
    Ok(FeatureSequence::new("", cfg.n_mels, values))
}

fn mel_and_energy(frames: &FrameMatrix, cfg: &AcousticConfig) -> (Vec<f64>, Vec<f64>) {
    let bank = MelFilterbank::new(cfg);
    let mut fft = PowerSpectrum::new(cfg.n_fft_mel);
    let mut power = Vec::new();
    let mut e = Vec::new();
    let mut values = Vec::with_capacity(frames.frames() * cfg.n_mels);
    let mut energy = Vec::with_capacity(frames.frames());
    for t in 0..frames.frames() {
        fft.power_into(frames.frame(t), &mut power);
        bank.apply(&power, &mut e);
        values.extend(e.iter().map(|&v| v.max(cfg.log_floor).ln()));
        energy.push(power.iter().sum::<f64>());
    }
    (values, energy)
}

/// Orthonormal DCT-II of `x`, first `keep` coefficients.
pub fn dct_ortho(x: &[f64], keep: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..keep)
        .map(|k| {
            let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Liftered cepstra with `c0` replaced by log frame energy.
pub fn mfcc(frames: &FrameMatrix, cfg: &AcousticConfig) -> Result<FeatureSequence> {
    let (logmel, energy) = mel_and_energy(frames, cfg);
    let n = cfg.n_mels as f64;
    let keep = cfg.n_mfcc;
    let basis: Vec<f64> = (0..keep)
        .flat_map(|k| {
            let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            (0..cfg.n_mels).map(move |i| s * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
        })
        .collect();
    let lifter: Vec<f64> = (0..keep)
        .map(|k| 1.0 + cfg.cep_lifter / 2.0 * (PI * k as f64 / cfg.cep_lifter).sin())
        .collect();
    let mut values = Vec::with_capacity(energy.len() * keep);
    for (t, e) in energy.iter().enumerate() {
        let x = &logmel[t * cfg.n_mels..(t + 1) * cfg.n_mels];
        for k in 0..keep {
            let b = &basis[k * cfg.n_mels..(k + 1) * cfg.n_mels];
            values.push(b.iter().zip(x).map(|(b, x)| b * x).sum::<f64>() * lifter[k]);
        }
        values[t * keep] = e.max(cfg.log_floor).ln();
    }
    Ok(FeatureSequence::new("", keep, values))
}
