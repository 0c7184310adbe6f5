//! Acoustic front-ends on 16 kHz audio: framing, log-Mel filterbank, MFCC,
//! Tukey-window spectrogram, periodicity-based hand-crafted features and
//! causal context stacking. Every output runs at the 10 ms hop rate.

mod context;
mod frame;
mod mel;
mod periodicity;
mod spectrum;

pub use context::stack_context;
pub use frame::{frame_count, frame_signal, preemphasis, FrameMatrix};
pub use mel::{dct_ortho, hz_to_mel, mel_filter_centers_hz, mel_filterbank, mel_to_hz, mfcc, MelFilterbank};
pub use periodicity::{
    amdf_clarity, harmonicity, hps_periodicity, prediction_gain, sadjadi_features, spectral_flux,
};
pub use spectrum::{spectrogram_tukey, tukey_power, tukey_window, PowerSpectrum};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use serde::{Deserialize, Serialize};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono audio at 16 kHz, samples nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::Input(format!(
                "audio must be {SAMPLE_RATE} Hz, got {sample_rate} Hz"
            )));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticConfig {
    pub win_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_fft_mel: usize,
    pub preemphasis: f64,
    pub log_floor: f64,
    pub n_spec_bins: usize,
    pub n_fft_spec: usize,
    pub tukey_alpha: f64,
    pub n_mfcc: usize,
    pub cep_lifter: f64,
    pub pitch_range_hz: [f64; 2],
    pub lpc_order: usize,
    pub hps_harmonics: usize,
}

impl Default for AcousticConfig {
    fn default() -> Self {
        AcousticConfig {
            win_len: 400,
            hop: 160,
            n_mels: 26,
            n_fft_mel: 512,
            preemphasis: 0.97,
            log_floor: 1e-10,
            n_spec_bins: 320,
            n_fft_spec: 640,
            tukey_alpha: 0.5,
            n_mfcc: 13,
            cep_lifter: 22.0,
            pitch_range_hz: [50.0, 400.0],
            lpc_order: 10,
            hps_harmonics: 5,
        }
    }
}

impl AcousticConfig {
    /// Autocorrelation/AMDF lag range for the pitch search, in samples.
    pub fn lag_range(&self) -> (usize, usize) {
        let sr = SAMPLE_RATE as f64;
        (
            (sr / self.pitch_range_hz[1]).round() as usize,
            (sr / self.pitch_range_hz[0]).round() as usize,
        )
    }
}

/// Time-major matrix of per-step feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub utt_id: String,
    pub step_rate: f64,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl FeatureSequence {
    pub fn new(utt_id: impl Into<String>, dim: usize, values: Vec<f64>) -> Self {
        assert!(dim > 0 && values.len() % dim == 0, "ragged feature matrix");
        FeatureSequence {
            utt_id: utt_id.into(),
            step_rate: 100.0,
            dim,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::from_vec(&[self.len(), self.dim], self.values.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Writes the dump format: a JSON header line then one line per step.
    pub fn write_dump<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = serde_json::json!({
            "utt_id": self.utt_id,
            "dim": self.dim,
            "step_rate": self.step_rate,
            "T": self.len(),
        });
        writeln!(w, "{header}")?;
        for t in 0..self.len() {
            let line: Vec<String> = self.row(t).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_dump(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: serde_json::Value = lines
            .next()
            .ok_or_else(|| Error::Input("empty feature dump".into()))
            .and_then(|l| serde_json::from_str(l).map_err(|e| Error::Input(format!("bad dump header: {e}"))))?;
        let dim = header["dim"].as_u64().ok_or_else(|| Error::Input("dump header lacks dim".into()))? as usize;
        let steps = header["T"].as_u64().ok_or_else(|| Error::Input("dump header lacks T".into()))? as usize;
        let mut values = Vec::with_capacity(dim * steps);
        for (i, line) in lines.enumerate() {
            let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let row = row.map_err(|e| Error::Input(format!("dump line {}: {e}", i + 2)))?;
            if row.len() != dim {
                return Err(Error::Input(format!("dump line {} has {} values, want {dim}", i + 2, row.len())));
            }
            values.extend(row);
        }
        if values.len() != dim * steps {
            return Err(Error::Input("dump row count differs from header".into()));
        }
        Ok(FeatureSequence {
            utt_id: header["utt_id"].as_str().unwrap_or_default().to_string(),
            step_rate: header["step_rate"].as_f64().unwrap_or(100.0),
            dim,
            values,
        })
    }
}
