use super::{AcousticConfig, FeatureSequence, FrameMatrix};
use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Zero-padded real FFT returning `|X[k]|^2 / n_fft` for `k = 0..=n_fft/2`.
pub struct PowerSpectrum {
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl PowerSpectrum {
    pub fn new(n_fft: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        PowerSpectrum {
            n_fft,
            fft,
            buf: vec![Complex::default(); n_fft],
            scratch,
        }
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    /// Complex spectrum of `x` (truncated or zero-padded to `n_fft`).
    pub fn transform(&mut self, x: &[f64]) -> &[Complex<f64>] {
        for (i, b) in self.buf.iter_mut().enumerate() {
            *b = Complex::new(x.get(i).copied().unwrap_or(0.0), 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        &self.buf
    }

    pub fn power_into(&mut self, x: &[f64], out: &mut Vec<f64>) {
        let n = self.n_fft as f64;
        let half = self.n_fft / 2;
        let spec = self.transform(x);
        out.clear();
        out.extend(spec[..=half].iter().map(|c| c.norm_sqr() / n));
    }

    pub fn power(&mut self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        self.power_into(x, &mut out);
        out
    }
}

/// Tapered cosine window; `alpha = 0` is rectangular, `alpha = 1` is Hann.
pub fn tukey_window(n: usize, alpha: f64) -> Vec<f64> {
    if n == 1 || alpha <= 0.0 {
        return vec![1.0; n];
    }
    let m = (n - 1) as f64;
    let edge = alpha * m / 2.0;
    (0..n)
        .map(|i| {
            let x = i as f64;
            let d = x.min(m - x);
            if d < edge {
                0.5 * (1.0 - (std::f64::consts::PI * d / edge).cos())
            } else {
                1.0
            }
        })
        .collect()
}

/// Power spectrum of one Tukey-windowed frame.
pub fn tukey_power(frame: &[f64], window: &[f64], fft: &mut PowerSpectrum) -> Vec<f64> {
    let xw: Vec<f64> = frame.iter().zip(window).map(|(x, w)| x * w).collect();
    fft.power(&xw)
}

/// Log power spectrogram with `n_spec_bins` bins of 25 Hz from DC.
pub fn spectrogram_tukey(frames: &FrameMatrix, cfg: &AcousticConfig) -> Result<FeatureSequence> {
    if cfg.n_spec_bins > cfg.n_fft_spec / 2 + 1 {
        return Err(Error::Dimension("more spectrogram bins than FFT bins".into()));
    }
    let window = tukey_window(frames.win_len, cfg.tukey_alpha);
    let mut fft = PowerSpectrum::new(cfg.n_fft_spec);
    let mut values = Vec::with_capacity(frames.frames() * cfg.n_spec_bins);
    for t in 0..frames.frames() {
        let p = tukey_power(frames.frame(t), &window, &mut fft);
        values.extend(p[..cfg.n_spec_bins].iter().map(|&v| v.max(cfg.log_floor).ln()));
    }
    Ok(FeatureSequence::new("", cfg.n_spec_bins, values))
}
