//! Small signal helpers for the channel and noise models.

/// Windowed-sinc low-pass FIR with a Hamming window, unit DC gain.
pub fn lowpass_taps(cutoff_hz: f64, sample_rate: f64, taps: usize) -> Vec<f64> {
    let fc = cutoff_hz / sample_rate;
    let mid = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let x = i as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * x).sin() / (std::f64::consts::PI * x)
            };
            let w = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    h
}

/// Same-length causal convolution `y[n] = sum_k h[k] x[n - k]`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for (n, out) in y.iter_mut().enumerate() {
        let kmax = h.len().min(n + 1);
        *out = (0..kmax).map(|k| h[k] * x[n - k]).sum();
    }
    y
}

/// Zero-phase variant of [`convolve`] for symmetric FIRs.
pub fn filter_centered(x: &[f64], h: &[f64]) -> Vec<f64> {
    let delay = (h.len() - 1) / 2;
    let mut padded = x.to_vec();
    padded.extend(std::iter::repeat_n(0.0, delay));
    convolve(&padded, h)[delay..].to_vec()
}

pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

/// Rounds to the 16-bit PCM grid so written files reload bit-exactly.
pub fn quantize_pcm(x: f64) -> f64 {
    (x.clamp(-1.0, 32767.0 / 32768.0) * 32768.0).round() / 32768.0
}

pub fn quantize_u8(x: f64) -> f64 {
    (x.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowpass_passes_dc_and_stops_high() {
        let h = lowpass_taps(6000.0, 16_000.0, 63);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let tone = |hz: f64| -> Vec<f64> {
            (0..4000).map(|n| (2.0 * std::f64::consts::PI * hz * n as f64 / 16_000.0).sin()).collect()
        };
        let low = filter_centered(&tone(500.0), &h);
        let high = filter_centered(&tone(7500.0), &h);
        assert!(power(&low[100..3900]) > 0.45);
        assert!(power(&high[100..3900]) < 0.01);
    }

    #[test]
    fn pcm_grid() {
        assert_eq!(quantize_pcm(2.0), 32767.0 / 32768.0);
        assert_eq!(quantize_pcm(-1.0), -1.0);
        assert_eq!(quantize_pcm(quantize_pcm(0.123)), quantize_pcm(0.123));
    }
}
