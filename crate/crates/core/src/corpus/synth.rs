use super::dsp::{filter_centered, lowpass_taps, quantize_pcm, quantize_u8};
use super::{AVUtterance, Condition, Segment, SpeakerProfile, FPS, IMAGE_H, IMAGE_W};
use crate::audio::{Waveform, SAMPLE_RATE};
use crate::video::{mouth_points, template_points, Affine, Image, LandmarkTrack, Point, N_LANDMARKS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::{PI, TAU};

pub const SEGMENT_RANGE: (f64, f64) = (0.5, 3.0);
const SPEECH_RMS: f64 = 0.08;
const FLOOR_RMS: f64 = 2e-4;
const BURST_RMS: f64 = 0.004;
/// Events inside non-speech: chance per pause of a closed-mouth
/// vocalisation and of a silent mouth movement, their duration and the
/// vocalisation level relative to the speaker's speech gain.
const VOCAL_CHANCE: f64 = 0.3;
const SILENT_MOTION_CHANCE: f64 = 0.35;
const EVENT_SECS: (f64, f64) = (0.25, 0.6);
const VOCAL_LEVEL: (f64, f64) = (0.35, 0.8);
const LANDMARK_JITTER: f64 = 0.2;
const MOUTH_CENTER: Point = [64.0, 100.0];
const MOUTH_WIDTH: f64 = 40.0;
const MAX_OPENING: f64 = 14.0;
const REST_OPENING: f64 = 1.0;
const LIP: f64 = 5.0;
/// Source pixels per template unit.
pub const SOURCE_SCALE: f64 = 0.5;

/// Alternating segments, non-speech first, each 0.5-3 s, cut at `duration`.
fn draw_segments(duration: f64, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let ms = |x: f64| (x * 1000.0).round() / 1000.0;
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut speech = false;
    while t < duration - 1e-9 {
        let len = ms(rng.random_range(SEGMENT_RANGE.0..SEGMENT_RANGE.1));
        let mut end = ms((t + len).min(duration));
        // Avoid slivers shorter than an analysis window at the end.
        if duration - end < 0.2 {
            end = duration;
        }
        out.push(Segment { start: t, end, speech });
        t = end;
        speech = !speech;
    }
    out
}

struct Vowel {
    f1: f64,
    f2: f64,
}

fn draw_vowel(rng: &mut ChaCha8Rng) -> Vowel {
    Vowel {
        f1: rng.random_range(300.0..800.0),
        f2: rng.random_range(900.0..2300.0),
    }
}

fn resonance(f: f64, center: f64, bw: f64) -> f64 {
    (-0.5 * ((f - center) / bw).powi(2)).exp()
}

/// Speech-shaped sound plus the mouth opening trajectory that drives it.
struct Track {
    audio: Vec<f64>,
    /// Opening in template units, per audio sample.
    opening: Vec<f64>,
}

/// Voiced, syllable-modulated sound over samples `s..e`, added to `audio`.
/// Returns the syllable envelope (times the edge ramp) per sample.
fn voiced_run(audio: &mut [f64], s: usize, e: usize, profile: &SpeakerProfile, level: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let white = Normal::new(0.0, 1.0).unwrap();
    let rate = profile.articulation_rate * rng.random_range(0.85..1.15);
    let f0_base = profile.f0 * rng.random_range(0.9..1.1);
    let drift_phase = rng.random_range(0.0..TAU);
    let mut vowels = vec![draw_vowel(rng), draw_vowel(rng)];
    let mut syllable = 0usize;
    let mut phase = 0.0f64;
    let mut jitter = 0.0f64;
    let ramp = 0.02 * sr;
    let mut amps = Vec::new();
    let mut shape = Vec::with_capacity(e - s);
    for i in s..e {
        let tau = (i - s) as f64 / sr;
        let cyc = rate * tau;
        if cyc.floor() as usize > syllable {
            syllable = cyc.floor() as usize;
            vowels.remove(0);
            vowels.push(draw_vowel(rng));
        }
        let frac = cyc.fract();
        let env = (PI * frac).sin().powi(2);
        let edge = (((i - s) as f64 / ramp).min((e - i) as f64 / ramp)).min(1.0);
        if (i - s) % 160 == 0 {
            jitter = 0.97 * jitter + 0.03 * white.sample(rng);
            let f0 = f0_base * (1.0 + 0.08 * (TAU * 0.6 * tau + drift_phase).sin() + 0.02 * jitter);
            let w = frac;
            let f1 = vowels[0].f1 * (1.0 - w) + vowels[1].f1 * w;
            let f2 = vowels[0].f2 * (1.0 - w) + vowels[1].f2 * w;
            amps.clear();
            let mut k = 1;
            while k as f64 * f0 < 4000.0 {
                let f = k as f64 * f0;
                amps.push((f, resonance(f, f1, 120.0) + 0.6 * resonance(f, f2, 160.0) + 0.3 * resonance(f, 2600.0, 220.0) + 0.15 / k as f64));
                k += 1;
            }
            let norm = amps.iter().map(|(_, a)| a * a).sum::<f64>().sqrt().max(1e-9);
            for a in amps.iter_mut() {
                a.1 /= norm;
            }
        }
        // amps[0] holds the fundamental.
        phase = (phase + TAU * amps[0].0 / sr) % (TAU * 1000.0);
        let voiced: f64 = amps.iter().enumerate().map(|(k, (_, a))| a * ((k + 1) as f64 * phase).sin()).sum();
        let l = level * std::f64::consts::SQRT_2 * edge * (0.35 + 0.65 * env);
        let fric = if env < 0.15 { 0.25 * white.sample(rng) * (1.0 - env / 0.15) } else { 0.0 };
        audio[i] += l * (voiced + fric);
        shape.push(env * edge);
    }
    shape
}

fn synthesize_audio(profile: &SpeakerProfile, segments: &[Segment], n: usize, rng: &mut ChaCha8Rng) -> Track {
    let sr = SAMPLE_RATE as f64;
    let mut audio = vec![0.0; n];
    let mut opening = vec![REST_OPENING; n];
    let gain = SPEECH_RMS * rng.random_range(0.7..1.4);
    let white = Normal::new(0.0, 1.0).unwrap();
    for seg in segments {
        let (s, e) = ((seg.start * sr).round() as usize, ((seg.end * sr).round() as usize).min(n));
        if seg.speech {
            let shape = voiced_run(&mut audio, s, e, profile, gain, rng);
            for (o, v) in opening[s..e].iter_mut().zip(shape) {
                *o = REST_OPENING + (MAX_OPENING - REST_OPENING) * profile.mouth_scale * v;
            }
            continue;
        }
        if rng.random_bool(0.5) && e - s > 1600 {
            let len = rng.random_range(800..(e - s).min(6400));
            let at = s + rng.random_range(0..(e - s - len));
            let h = lowpass_taps(rng.random_range(1500.0..5000.0), sr, 31);
            let raw: Vec<f64> = (0..len).map(|_| white.sample(rng)).collect();
            let burst = filter_centered(&raw, &h);
            let p = burst.iter().map(|v| v * v).sum::<f64>() / len as f64;
            for (i, v) in burst.iter().enumerate() {
                let w = (PI * i as f64 / len as f64).sin();
                audio[at + i] += BURST_RMS * w * v / p.sqrt().max(1e-12);
            }
        }
        // One event per long enough pause: humming or a backchannel with
        // the lips closed (voiced, mouth at rest), or a silent lip movement.
        let (lo, hi) = EVENT_SECS;
        if e - s <= (hi * sr) as usize + 3200 {
            continue;
        }
        let len = (rng.random_range(lo..hi) * sr) as usize;
        let at = s + 1600 + rng.random_range(0..(e - s - len - 3200));
        let draw: f64 = rng.random();
        if draw < VOCAL_CHANCE {
            let level = gain * rng.random_range(VOCAL_LEVEL.0..VOCAL_LEVEL.1);
            voiced_run(&mut audio, at, at + len, profile, level, rng);
        } else if draw < VOCAL_CHANCE + SILENT_MOTION_CHANCE {
            let rate = rng.random_range(2.0..4.5);
            let amp = rng.random_range(0.3..0.8);
            let ramp = 0.05 * sr;
            for (j, o) in opening[at..at + len].iter_mut().enumerate() {
                let env = (PI * rate * j as f64 / sr).sin().powi(2);
                let edge = ((j as f64 / ramp).min((len - j) as f64 / ramp)).min(1.0);
                *o = REST_OPENING + (MAX_OPENING - REST_OPENING) * profile.mouth_scale * amp * env * edge;
            }
        }
    }
    let floor: Vec<f64> = (0..n).map(|_| FLOOR_RMS * white.sample(rng)).collect();
    for (a, f) in audio.iter_mut().zip(floor) {
        *a = quantize_pcm(*a + f);
    }
    Track { audio, opening }
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn in_ellipse(p: Point, c: Point, r: Point) -> bool {
    ((p[0] - c[0]) / r[0]).powi(2) + ((p[1] - c[1]) / r[1]).powi(2) <= 1.0
}

/// Gray level of the static face at a template-space point.
fn face_shade(q: Point) -> f64 {
    if in_ellipse(q, [42.0, 54.0], [9.0, 4.0]) || in_ellipse(q, [86.0, 54.0], [9.0, 4.0]) {
        0.15
    } else if in_ellipse(q, [58.0, 78.0], [2.5, 1.8]) || in_ellipse(q, [70.0, 78.0], [2.5, 1.8]) {
        0.3
    } else if in_ellipse(q, [64.0, 82.0], [54.0, 72.0]) {
        0.68
    } else {
        0.22
    }
}

const SUPER: usize = 4;

fn render_pixel(x: usize, y: usize, to_tpl: &Affine, shade: impl Fn(Point) -> f64) -> f64 {
    let mut acc = 0.0;
    for sy in 0..SUPER {
        for sx in 0..SUPER {
            let p = [
                x as f64 - 0.5 + (sx as f64 + 0.5) / SUPER as f64,
                y as f64 - 0.5 + (sy as f64 + 0.5) / SUPER as f64,
            ];
            acc += shade(to_tpl.apply(p));
        }
    }
    acc / (SUPER * SUPER) as f64
}

/// Mouth shape in template space for a given opening.
fn mouth_shape(opening: f64, scale: f64) -> Vec<Point> {
    let width = MOUTH_WIDTH * scale * (1.0 - 0.12 * (opening - REST_OPENING) / MAX_OPENING);
    mouth_points(MOUTH_CENTER, width, opening, LIP)
}

fn render_video(profile: &SpeakerProfile, track: &Track, n_frames: usize, rng: &mut ChaCha8Rng) -> (Vec<Image>, LandmarkTrack) {
    let pose = Affine::similarity(
        rng.random_range(-3.0f64..3.0).to_radians(),
        SOURCE_SCALE * rng.random_range(0.97..1.03),
        [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)],
    );
    let to_tpl = pose.inverse().expect("similarity is invertible");
    let mut base = vec![0.0; IMAGE_W * IMAGE_H];
    for y in 0..IMAGE_H {
        for x in 0..IMAGE_W {
            base[y * IMAGE_W + x] = render_pixel(x, y, &to_tpl, face_shade);
        }
    }
    // Source-space box that any mouth shape can touch.
    let reach = [MOUTH_WIDTH * 0.7, MAX_OPENING * 0.8 + LIP + 3.0];
    let corners = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]].map(|[sx, sy]| {
        pose.apply([MOUTH_CENTER[0] + sx * reach[0], MOUTH_CENTER[1] + sy * reach[1]])
    });
    let bx0 = corners.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let bx1 = (corners.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize + 1).min(IMAGE_W);
    let by0 = corners.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let by1 = (corners.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max).ceil() as usize + 1).min(IMAGE_H);

    let jitter = Normal::new(0.0, LANDMARK_JITTER).unwrap();
    let tpl = template_points();
    let sr = SAMPLE_RATE as f64;
    let mut frames = Vec::with_capacity(n_frames);
    let mut points = Vec::with_capacity(n_frames * N_LANDMARKS);
    for k in 0..n_frames {
        let i = ((k as f64 / FPS as f64) * sr).round() as usize;
        let opening = track.opening[i.min(track.opening.len() - 1)];
        let mouth = mouth_shape(opening, profile.mouth_scale);
        let (outer, inner) = (&mouth[..12], &mouth[12..]);
        let shade = |q: Point| {
            if point_in_polygon(q, inner) {
                0.05
            } else if point_in_polygon(q, outer) {
                0.42
            } else {
                face_shade(q)
            }
        };
        let mut img = base.clone();
        for y in by0..by1 {
            for x in bx0..bx1 {
                img[y * IMAGE_W + x] = render_pixel(x, y, &to_tpl, shade);
            }
        }
        frames.push(Image::gray(IMAGE_W, IMAGE_H, img.into_iter().map(quantize_u8).collect()).unwrap());
        let mut lm = tpl.clone();
        lm.splice(31..49, mouth);
        for p in lm {
            let q = [p[0] + jitter.sample(rng), p[1] + jitter.sample(rng)];
            points.push(pose.apply(q));
        }
    }
    let track = LandmarkTrack::new(points, vec![false; n_frames], (FPS, 1)).unwrap();
    (frames, track)
}

/// Clean, ideal-channel recording of one synthetic utterance.
pub fn generate_utterance(profile: &SpeakerProfile, utt_id: &str, duration: f64, seed: u64) -> AVUtterance {
    assert!((2.0..=30.0).contains(&duration), "duration must lie in [2, 30] s");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration * SAMPLE_RATE as f64).round() as usize;
    let segments = draw_segments(duration, &mut rng);
    let track = synthesize_audio(profile, &segments, n, &mut rng);
    let n_frames = (duration * FPS as f64).round() as usize;
    let (frames, landmarks) = render_video(profile, &track, n_frames, &mut rng);
    AVUtterance {
        utt_id: utt_id.to_string(),
        speaker_id: profile.speaker_id.clone(),
        gender: profile.gender,
        condition: Condition::IDEAL_CLEAN,
        audio: Waveform::new(track.audio, SAMPLE_RATE).unwrap(),
        frames,
        landmarks,
        segments,
    }
}

/// Mouth-height trajectory measured from the generated landmarks.
pub fn mouth_heights(utt: &AVUtterance) -> Vec<f64> {
    (0..utt.landmarks.frames())
        .map(|t| {
            let f = utt.landmarks.frame(t);
            let ys = f[31..43].iter().map(|p| p[1]);
            let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
            hi - lo
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dsp::power;

    fn utt(seed: u64, duration: f64) -> AVUtterance {
        let p = SpeakerProfile::generate(0, seed as usize);
        generate_utterance(&p, "u", duration, seed)
    }

    #[test]
    fn has_both_classes() {
        for seed in 0..10 {
            let u = utt(seed, 4.0);
            assert!(u.segments.iter().any(|s| s.speech));
            assert!(u.segments.iter().any(|s| !s.speech));
            assert_eq!(u.segments.last().unwrap().end, 4.0);
            assert_eq!(u.audio.len(), 64_000);
            assert_eq!(u.frames.len(), 120);
        }
    }

    #[test]
    fn speech_is_louder() {
        let u = utt(3, 8.0);
        let (mut sp, mut ns) = (Vec::new(), Vec::new());
        for seg in &u.segments {
            let r = &u.audio.samples[(seg.start * 16_000.0) as usize..(seg.end * 16_000.0) as usize];
            if seg.speech { sp.extend_from_slice(r) } else { ns.extend_from_slice(r) }
        }
        assert!(power(&sp) > 10.0 * power(&ns));
    }

    #[test]
    fn mouth_moves_during_speech() {
        let u = utt(0, 10.0);
        let h = mouth_heights(&u);
        let (mut sp, mut ns) = (Vec::new(), Vec::new());
        for (t, v) in h.iter().enumerate() {
            let time = t as f64 / FPS as f64;
            let speech = u.segments.iter().any(|s| s.speech && s.start <= time && time < s.end);
            if speech { sp.push(*v) } else { ns.push(*v) }
        }
        let var = |x: &[f64]| {
            let m = x.iter().sum::<f64>() / x.len() as f64;
            x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
        };
        assert!(var(&sp) >= 5.0 * var(&ns), "{} vs {}", var(&sp), var(&ns));
    }

    #[test]
    fn deterministic() {
        let (a, b) = (utt(5, 3.0), utt(5, 3.0));
        assert_eq!(a.audio, b.audio);
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.landmarks, b.landmarks);
    }
}
