use super::frame::frames_of;
use super::spectrum::PowerSpectrum;
use super::{frame_signal, mel_filterbank, AcousticConfig, FeatureSequence, Waveform};
use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

const SILENCE: f64 = 1e-12;
const RESIDUAL_FLOOR: f64 = 1e-12;
const HPS_FFT: usize = 2048;

/// Best normalised cross-correlation over the lag range, clamped to `[0, 1]`.
///
/// Each lag compares `x[0..n-τ]` with `x[τ..n]` and divides by the geometric
/// mean of the two segment energies, so a perfectly periodic frame scores 1.
pub fn harmonicity(frame: &[f64], lags: (usize, usize)) -> f64 {
    let r = autocorrelation(frame, lags.1);
    harmonicity_from(frame, &r, lags)
}

fn harmonicity_from(frame: &[f64], r: &[f64], (lo, hi): (usize, usize)) -> f64 {
    let n = frame.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in frame {
        prefix.push(prefix.last().unwrap() + v * v);
    }
    let mut best = 0.0f64;
    for tau in lo..=hi.min(n - 1) {
        let head = prefix[n - tau];
        let tail = prefix[n] - prefix[tau];
        let den = (head * tail).sqrt();
        if den > SILENCE {
            best = best.max(r[tau] / den);
        }
    }
    best.clamp(0.0, 1.0)
}

/// Linear (non-circular) autocorrelation for lags `0..=max_lag`.
fn autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    let size = (frame.len() + max_lag + 1).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex<f64>> = (0..size)
        .map(|i| Complex::new(frame.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    fwd.process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    (0..=max_lag.min(frame.len() - 1)).map(|k| buf[k].re / size as f64).collect()
}

/// `1 - min AMDF / max AMDF` over the lag range.
pub fn amdf_clarity(frame: &[f64], (lo, hi): (usize, usize)) -> f64 {
    let n = frame.len();
    let (mut min, mut max) = (f64::INFINITY, 0.0f64);
    for tau in lo..=hi.min(n - 1) {
        let d = frame[tau..]
            .iter()
            .zip(&frame[..n - tau])
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / (n - tau) as f64;
        min = min.min(d);
        max = max.max(d);
    }
    if max <= SILENCE {
        return 0.0;
    }
    (1.0 - min / max).clamp(0.0, 1.0)
}

/// `10 log10(E / E_residual)` for an order-`order` LPC fit.
pub fn prediction_gain(frame: &[f64], order: usize) -> f64 {
    let r = autocorrelation(frame, order);
    prediction_gain_from(&r, order)
}

fn prediction_gain_from(r: &[f64], order: usize) -> f64 {
    if r[0] <= SILENCE {
        return 0.0;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut err = r[0];
    for i in 1..=order.min(r.len() - 1) {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        let prev = a.clone();
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= RESIDUAL_FLOOR {
            break;
        }
    }
    10.0 * (r[0] / err.max(RESIDUAL_FLOOR)).log10()
}

/// Peak of the harmonic product spectrum over the pitch range, as a
/// geometric-mean harmonic magnitude relative to the RMS spectral magnitude,
/// compressed with `ln(1 + x)`.
pub fn hps_periodicity(frame: &[f64], cfg: &AcousticConfig, fft: &mut PowerSpectrum) -> f64 {
    let n = frame.len();
    let xw: Vec<f64> = frame
        .iter()
        .enumerate()
        .map(|(i, v)| v * (0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos()))
        .collect();
    let size = fft.n_fft();
    let mag: Vec<f64> = fft.transform(&xw)[..=size / 2].iter().map(|c| c.norm()).collect();
    let rms = (mag.iter().map(|m| m * m).sum::<f64>() / mag.len() as f64).sqrt();
    if rms <= SILENCE {
        return 0.0;
    }
    let hz_per_bin = super::SAMPLE_RATE as f64 / size as f64;
    let lo = (cfg.pitch_range_hz[0] / hz_per_bin).ceil() as usize;
    let hi = (cfg.pitch_range_hz[1] / hz_per_bin).floor() as usize;
    let h = cfg.hps_harmonics;
    let mut peak = 0.0f64;
    for k in lo.max(1)..=hi {
        if k * h >= mag.len() {
            break;
        }
        let log_sum: f64 = (1..=h).map(|m| (mag[k * m] / rms).max(1e-300).ln()).sum();
        peak = peak.max((log_sum / h as f64).exp());
    }
    peak.ln_1p()
}

/// Euclidean distance between consecutive rows; the first step is 0.
pub fn spectral_flux(logmel: &FeatureSequence) -> Vec<f64> {
    let mut out = vec![0.0; logmel.len()];
    for t in 1..logmel.len() {
        out[t] = logmel
            .row(t)
            .iter()
            .zip(logmel.row(t - 1))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
    }
    out
}

/// Harmonicity, clarity, prediction gain, periodicity and spectral flux.
pub fn sadjadi_features(w: &Waveform, cfg: &AcousticConfig) -> Result<FeatureSequence> {
    let min = cfg.win_len + cfg.hop;
    if w.len() < min {
        return Err(Error::TooShort { len: w.len(), min });
    }
    let raw = frames_of(&w.samples, cfg.win_len, cfg.hop)?;
    let flux = spectral_flux(&mel_filterbank(&frame_signal(w, cfg)?, cfg)?);
    let lags = cfg.lag_range();
    let mut hps_fft = PowerSpectrum::new(HPS_FFT);
    let mut values = Vec::with_capacity(raw.frames() * 5);
    for t in 0..raw.frames() {
        let f = raw.frame(t);
        let energy: f64 = f.iter().map(|v| v * v).sum();
        if energy < SILENCE {
            values.extend([0.0, 0.0, 0.0, 0.0, flux[t]]);
            continue;
        }
        let r = autocorrelation(f, lags.1.max(cfg.lpc_order));
        values.push(harmonicity_from(f, &r, lags));
        values.push(amdf_clarity(f, lags));
        values.push(prediction_gain_from(&r[..=cfg.lpc_order], cfg.lpc_order));
        values.push(hps_periodicity(f, cfg, &mut hps_fft));
        values.push(flux[t]);
    }
    Ok(FeatureSequence::new("", 5, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sawtooth(n: usize) -> Vec<f64> {
        (0..n).map(|i| 2.0 * ((i % 160) as f64 / 160.0) - 1.0).collect()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    #[test]
    fn autocorrelation_matches_direct_sum() {
        let x = noise(400, 3);
        let r = autocorrelation(&x, 320);
        for tau in [0usize, 1, 40, 199, 320] {
            let direct: f64 = (0..400 - tau).map(|i| x[i] * x[i + tau]).sum();
            assert!((r[tau] - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn sawtooth_is_harmonic_and_clear() {
        let cfg = AcousticConfig::default();
        let w = Waveform::new(sawtooth(8000), 16_000).unwrap();
        let f = sadjadi_features(&w, &cfg).unwrap();
        for t in 1..f.len() - 1 {
            assert!(f.row(t)[0] > 0.9, "harmonicity {}", f.row(t)[0]);
            assert!(f.row(t)[1] > 0.9, "clarity {}", f.row(t)[1]);
        }
    }

    #[test]
    fn sawtooth_more_predictable_than_noise() {
        let cfg = AcousticConfig::default();
        let mean_gain = |x: Vec<f64>| {
            let f = sadjadi_features(&Waveform::new(x, 16_000).unwrap(), &cfg).unwrap();
            (0..f.len()).map(|t| f.row(t)[2]).sum::<f64>() / f.len() as f64
        };
        assert!(mean_gain(sawtooth(8000)) > mean_gain(noise(8000, 7)));
    }

    #[test]
    fn stationary_input_has_no_flux() {
        let cfg = AcousticConfig::default();
        // Period 160 equals the hop, so every frame holds identical samples.
        let x: Vec<f64> = (0..6400)
            .map(|i| (2.0 * std::f64::consts::PI * 200.0 * i as f64 / 16_000.0).sin())
            .collect();
        let f = sadjadi_features(&Waveform::new(x, 16_000).unwrap(), &cfg).unwrap();
        assert_eq!(f.row(0)[4], 0.0);
        // Pre-emphasis leaves sample 0 unfiltered, so frame 0 is special.
        for t in 2..f.len() {
            assert!(f.row(t)[4] < 1e-9);
        }
    }

    #[test]
    fn silence_is_finite() {
        let cfg = AcousticConfig::default();
        let f = sadjadi_features(&Waveform::new(vec![0.0; 2000], 16_000).unwrap(), &cfg).unwrap();
        assert!(f.is_finite());
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn levinson_recovers_ar1_gain() {
        // AR(1) with coefficient a has gain 1 / (1 - a^2) from order 1 on.
        let a: f64 = 0.9;
        let r: Vec<f64> = (0..=10).map(|k| a.powi(k)).collect();
        let g = prediction_gain_from(&r, 10);
        assert!((g - 10.0 * (1.0 / (1.0 - a * a)).log10()).abs() < 1e-9);
    }

    #[test]
    fn periodicity_prefers_harmonic_frames() {
        let cfg = AcousticConfig::default();
        let mut fft = PowerSpectrum::new(HPS_FFT);
        let saw = hps_periodicity(&sawtooth(400), &cfg, &mut fft);
        let hiss = hps_periodicity(&noise(400, 9), &cfg, &mut fft);
        assert!(saw > hiss, "{saw} vs {hiss}");
    }

    #[test]
    fn too_short() {
        let cfg = AcousticConfig::default();
        assert!(sadjadi_features(&Waveform::new(vec![0.1; 500], 16_000).unwrap(), &cfg).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn bounded_and_finite(seed in 0u64..1000, amp in 0.0f64..1.0) {
            let cfg = AcousticConfig::default();
            let x: Vec<f64> = noise(1200, seed).iter().map(|v| v * amp).collect();
            let f = sadjadi_features(&Waveform::new(x, 16_000).unwrap(), &cfg).unwrap();
            proptest::prop_assert!(f.is_finite());
            for t in 0..f.len() {
                let r = f.row(t);
                proptest::prop_assert!((-1e-9..=1.0 + 1e-9).contains(&r[0]));
                proptest::prop_assert!((-1e-9..=1.0 + 1e-9).contains(&r[1]));
                proptest::prop_assert!(r[4] >= 0.0);
            }
        }
    }
}
