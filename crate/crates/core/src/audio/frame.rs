use super::{AcousticConfig, Waveform};
use crate::error::{Error, Result};

/// Overlapping analysis frames, `frames x win_len`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMatrix {
    pub win_len: usize,
    pub data: Vec<f64>,
}

impl FrameMatrix {
    pub fn frames(&self) -> usize {
        self.data.len() / self.win_len
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.win_len..(t + 1) * self.win_len]
    }
}

pub fn frame_count(len: usize, win: usize, hop: usize) -> Option<usize> {
    (len >= win).then(|| 1 + (len - win) / hop)
}

/// `y[n] = x[n] - coeff * x[n - 1]`, with `y[0] = x[0]`.
pub fn preemphasis(x: &[f64], coeff: f64) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        y.push(first);
    }
    y.extend(x.windows(2).map(|w| w[1] - coeff * w[0]));
    y
}

pub(crate) fn frames_of(x: &[f64], win: usize, hop: usize) -> Result<FrameMatrix> {
    let n = frame_count(x.len(), win, hop).ok_or(Error::TooShort { len: x.len(), min: win })?;
    let mut data = Vec::with_capacity(n * win);
    for t in 0..n {
        data.extend_from_slice(&x[t * hop..t * hop + win]);
    }
    Ok(FrameMatrix { win_len: win, data })
}

/// Pre-emphasises then cuts `1 + (len - win) / hop` rectangular frames.
pub fn frame_signal(w: &Waveform, cfg: &AcousticConfig) -> Result<FrameMatrix> {
    if w.len() < cfg.win_len {
        return Err(Error::TooShort {
            len: w.len(),
            min: cfg.win_len,
        });
    }
    frames_of(&preemphasis(&w.samples, cfg.preemphasis), cfg.win_len, cfg.hop)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(n: usize) -> Waveform {
        Waveform::new((0..n).map(|i| (i as f64 * 0.01).sin()).collect(), 16_000).unwrap()
    }

    #[test]
    fn frame_counts() {
        let cfg = AcousticConfig::default();
        assert_eq!(frame_signal(&wave(16_000), &cfg).unwrap().frames(), 98);
        assert_eq!(frame_signal(&wave(400), &cfg).unwrap().frames(), 1);
        assert!(matches!(
            frame_signal(&wave(399), &cfg),
            Err(Error::TooShort { len: 399, min: 400 })
        ));
    }

    #[test]
    fn preemphasis_first_difference() {
        assert_eq!(preemphasis(&[1.0, 1.0, 2.0], 0.5), vec![1.0, 0.5, 1.5]);
    }

    proptest::proptest! {
        #[test]
        fn frame_count_formula(len in 400usize..6000) {
            let cfg = AcousticConfig::default();
            let f = frame_signal(&wave(len), &cfg).unwrap();
            proptest::prop_assert_eq!(f.frames(), 1 + (len - 400) / 160);
        }
    }
}
