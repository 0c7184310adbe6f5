use super::dsp::{convolve, filter_centered, lowpass_taps, power, quantize_pcm, quantize_u8};
use super::seed::derive_seed;
use super::synth::SOURCE_SCALE;
use super::{AVUtterance, Channel, Condition, Env};
use crate::audio::{Waveform, SAMPLE_RATE};
use crate::video::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::{PI, TAU};

pub const PRACTICAL_CUTOFF_HZ: f64 = 6000.0;
pub const REVERB_SECS: f64 = 0.03;
/// Blur of practical video, in template units (source pixels are half that).
pub const PRACTICAL_BLUR: f64 = 1.0;
pub const PRACTICAL_LANDMARK_NOISE: f64 = 0.5;

/// Babble-like interference: overlapping harmonic tone bursts over coloured noise.
pub fn babble(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let mut tones = vec![0.0; n];
    let bursts = (n as f64 / sr * 12.0).ceil() as usize;
    for _ in 0..bursts {
        let len = rng.random_range(0.08..0.4) * sr;
        let len = (len as usize).min(n);
        let at = rng.random_range(0..=n - len);
        let f0 = rng.random_range(100.0..300.0);
        let amp = rng.random_range(0.5..1.0);
        let harmonics = rng.random_range(3..8);
        for i in 0..len {
            let w = (PI * i as f64 / len as f64).sin().powi(2);
            let t = i as f64 / sr;
            let v: f64 = (1..=harmonics).map(|k| (TAU * f0 * k as f64 * t).sin() / k as f64).sum();
            tones[at + i] += amp * w * v;
        }
    }
    let white = Normal::new(0.0, 1.0).unwrap();
    let mut coloured = Vec::with_capacity(n);
    let mut state = 0.0;
    for _ in 0..n {
        state = 0.9 * state + white.sample(rng);
        coloured.push(state);
    }
    let (pt, pc) = (power(&tones).max(1e-20), power(&coloured).max(1e-20));
    tones
        .iter()
        .zip(&coloured)
        .map(|(t, c)| t / pt.sqrt() + c / pc.sqrt())
        .collect()
}

/// Decaying 30 ms tail after a unit direct path.
fn reverb_impulse(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = (REVERB_SECS * SAMPLE_RATE as f64) as usize;
    let tau = len as f64 / 6.9;
    let white = Normal::new(0.0, 1.0).unwrap();
    let mut h = vec![0.0; len];
    h[0] = 1.0;
    for (i, v) in h.iter_mut().enumerate().skip(1) {
        *v = 0.05 * (-(i as f64) / tau).exp() * white.sample(rng);
    }
    h
}

fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r).map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp()).collect();
    let ks: f64 = k.iter().sum();
    let (w, h) = (img.width as isize, img.height as isize);
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (j, kv) in k.iter().enumerate() {
                    let o = j as isize - r;
                    let (sx, sy) = if horizontal { ((x + o).clamp(0, w - 1), y) } else { (x, (y + o).clamp(0, h - 1)) };
                    acc += kv * src[(sy * w + sx) as usize];
                }
                out[(y * w + x) as usize] = acc / ks;
            }
        }
        out
    };
    let blurred = pass(&pass(&img.data, true), false);
    Image::gray(img.width, img.height, blurred.into_iter().map(quantize_u8).collect()).unwrap()
}

/// Samples of `x` inside the speech segments.
pub fn speech_samples(x: &[f64], segments: &[super::Segment]) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    segments
        .iter()
        .filter(|s| s.speech)
        .flat_map(|s| {
            let a = ((s.start * sr).round() as usize).min(x.len());
            let b = ((s.end * sr).round() as usize).min(x.len());
            x[a..b].iter().copied()
        })
        .collect()
}

/// Scale factor putting `noise` at `snr_db` below `signal`.
pub fn noise_gain(signal: &[f64], noise: &[f64], snr_db: f64) -> f64 {
    (power(signal) / (power(noise).max(1e-20) * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Applies the channel and environment of `condition` to a clean, ideal utterance.
///
/// The channel draws from a stream shared by both environments, so the
/// clean and noisy versions of a channel differ only by the added noise.
pub fn degrade(clean: &AVUtterance, condition: Condition, seed: u64) -> AVUtterance {
    if condition == Condition::IDEAL_CLEAN {
        return clean.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, condition.channel as u64]));
    let mut out = clean.clone();
    out.condition = condition;
    let mut x = clean.audio.samples.clone();
    if condition.channel == Channel::Practical {
        let h = lowpass_taps(PRACTICAL_CUTOFF_HZ, SAMPLE_RATE as f64, 63);
        x = convolve(&filter_centered(&x, &h), &reverb_impulse(&mut rng));
        let src_sigma = PRACTICAL_BLUR * SOURCE_SCALE;
        out.frames = clean.frames.iter().map(|f| gaussian_blur(f, src_sigma)).collect();
        let noise = Normal::new(0.0, PRACTICAL_LANDMARK_NOISE).unwrap();
        for p in out.landmarks.points.iter_mut() {
            p[0] += noise.sample(&mut rng);
            p[1] += noise.sample(&mut rng);
        }
    }
    if condition.env == Env::Noisy {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 100 + condition.index()]));
        let b = babble(x.len(), &mut rng);
        // Active speech level: signal power over the speech segments only.
        let g = noise_gain(&speech_samples(&x, &clean.segments), &b, condition.snr_db());
        for (v, n) in x.iter_mut().zip(&b) {
            *v += g * n;
        }
    }
    out.audio = Waveform::new(x.into_iter().map(quantize_pcm).collect(), SAMPLE_RATE).unwrap();
    out
}
