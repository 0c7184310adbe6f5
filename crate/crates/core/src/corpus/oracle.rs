use super::{AVUtterance, STEP_HOP, STEP_WIN};
use crate::eval::{frame_metrics, per_speaker_average, FrameMetrics};
use crate::error::Result;
use std::collections::BTreeMap;

/// Log mean-square energy of every full analysis step.
pub fn frame_log_energy(samples: &[f64]) -> Vec<f64> {
    if samples.len() < STEP_WIN {
        return Vec::new();
    }
    (0..=(samples.len() - STEP_WIN) / STEP_HOP)
        .map(|t| {
            let w = &samples[t * STEP_HOP..t * STEP_HOP + STEP_WIN];
            (w.iter().map(|v| v * v).sum::<f64>() / STEP_WIN as f64 + 1e-12).ln()
        })
        .collect()
}

/// Energy-threshold detector used to check that the corpus is learnable
/// when clean and genuinely harder when degraded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyOracle {
    pub threshold: f64,
}

impl EnergyOracle {
    /// Picks the threshold maximising pooled F1 over `utts`.
    pub fn calibrate(utts: &[AVUtterance]) -> Self {
        let mut pairs: Vec<(f64, u8)> = Vec::new();
        for u in utts {
            pairs.extend(frame_log_energy(&u.audio.samples).into_iter().zip(u.step_labels()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let positives = pairs.iter().filter(|p| p.1 == 1).count() as u64;
        let total = pairs.len() as u64;
        // Sweep thresholds upward; everything at or above the cut is speech.
        let (mut best, mut best_f1) = (f64::NEG_INFINITY, -1.0);
        let mut fn_ = 0u64;
        let mut tn = 0u64;
        for i in 0..pairs.len() {
            let tp = positives - fn_;
            let fp = total - i as u64 - tp;
            let f1 = FrameMetrics::from_counts(tp, fp, tn, fn_).f1;
            if f1 > best_f1 && (i == 0 || pairs[i].0 > pairs[i - 1].0) {
                best_f1 = f1;
                best = if i == 0 { pairs[0].0 - 1.0 } else { 0.5 * (pairs[i - 1].0 + pairs[i].0) };
            }
            if pairs[i].1 == 1 {
                fn_ += 1;
            } else {
                tn += 1;
            }
        }
        EnergyOracle { threshold: best }
    }

    pub fn predict(&self, u: &AVUtterance) -> Vec<u8> {
        frame_log_energy(&u.audio.samples).into_iter().map(|e| u8::from(e >= self.threshold)).collect()
    }

    /// Macro F1 over the speakers present in `utts`.
    pub fn macro_f1(&self, utts: &[AVUtterance]) -> Result<f64> {
        let mut by_spk: BTreeMap<&str, FrameMetrics> = BTreeMap::new();
        for u in utts {
            let m = frame_metrics(&self.predict(u), &u.step_labels())?;
            let e = by_spk.entry(&u.speaker_id).or_default();
            *e = e.merge(&m);
        }
        let per: Vec<FrameMetrics> = by_spk.into_values().collect();
        Ok(per_speaker_average(&per)?.f1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_of_constant_signal() {
        let e = frame_log_energy(&[0.5; 800]);
        assert_eq!(e.len(), 3);
        assert!((e[0] - (0.25f64 + 1e-12).ln()).abs() < 1e-12);
    }
}
