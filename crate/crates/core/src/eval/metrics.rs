use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Frame-level scores with speech as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl FrameMetrics {
    pub fn from_counts(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        FrameMetrics {
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            precision,
            recall,
            f1: f1_score(precision, recall),
            tp,
            fp,
            tn,
            fn_,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Pools the counts of two score sets.
    pub fn merge(&self, other: &FrameMetrics) -> FrameMetrics {
        FrameMetrics::from_counts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn_ + other.fn_)
    }
}

pub fn frame_metrics(pred: &[u8], gold: &[u8]) -> Result<FrameMetrics> {
    if pred.len() != gold.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} reference labels",
            pred.len(),
            gold.len()
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &g) in pred.iter().zip(gold) {
        match (p, g) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fn_ += 1,
            _ => return Err(Error::Input(format!("label pair ({p}, {g}) outside {{0, 1}}"))),
        }
    }
    Ok(FrameMetrics::from_counts(tp, fp, tn, fn_))
}

/// Unweighted means of the four rates over speakers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn per_speaker_average(speakers: &[FrameMetrics]) -> Result<MacroMetrics> {
    if speakers.is_empty() {
        return Err(Error::Input("no speakers to average".into()));
    }
    let n = speakers.len() as f64;
    let mean = |f: fn(&FrameMetrics) -> f64| speakers.iter().map(f).sum::<f64>() / n;
    Ok(MacroMetrics {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_rows() {
        let closed = 2.0 * 0.966 * 0.905 / (0.966 + 0.905);
        assert!((f1_score(0.966, 0.905) - closed).abs() < 1e-15);
        // Published rows are rounded to 0.1 points, inputs included.
        assert!((f1_score(0.966, 0.905) - 0.934).abs() < 1e-3);
        assert!((f1_score(0.929, 0.926) - 0.927).abs() < 5e-4);
        assert!((f1_score(0.8, 0.8) - 0.8).abs() < 1e-15);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn counts_and_conventions() {
        let m = frame_metrics(&[1, 1, 0, 0, 1], &[1, 0, 0, 1, 1]).unwrap();
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (2, 1, 1, 1));
        assert!((m.accuracy - 0.6).abs() < 1e-15);
        let none = frame_metrics(&[0, 0], &[0, 0]).unwrap();
        assert_eq!((none.precision, none.recall, none.f1, none.accuracy), (0.0, 0.0, 0.0, 1.0));
        assert!(frame_metrics(&[1], &[1, 0]).is_err());
        assert!(frame_metrics(&[2], &[1]).is_err());
    }

    #[test]
    fn macro_is_unweighted() {
        let a = FrameMetrics { f1: 0.9, ..Default::default() };
        let b = FrameMetrics { f1: 0.7, tp: 1000, ..Default::default() };
        assert!((per_speaker_average(&[a, b]).unwrap().f1 - 0.8).abs() < 1e-15);
        assert_eq!(per_speaker_average(&[a]).unwrap().f1, 0.9);
        assert!(per_speaker_average(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn f1_from_counts_matches_rates(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
            let m = FrameMetrics::from_counts(tp, fp, tn, fn_);
            proptest::prop_assert!((m.f1 - f1_score(m.precision, m.recall)).abs() < 1e-12);
            for v in [m.accuracy, m.precision, m.recall, m.f1] {
                proptest::prop_assert!((0.0..=1.0).contains(&v));
            }
            if tp + fp + fn_ > 0 {
                proptest::prop_assert!((m.f1 - 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64).abs() < 1e-12);
            }
        }

        #[test]
        fn macro_order_free(f in proptest::collection::vec(0.0f64..1.0, 1..10)) {
            let mut ms: Vec<FrameMetrics> = f.iter().map(|&x| FrameMetrics { f1: x, ..Default::default() }).collect();
            let a = per_speaker_average(&ms).unwrap().f1;
            ms.reverse();
            proptest::prop_assert!((per_speaker_average(&ms).unwrap().f1 - a).abs() < 1e-12);
        }
    }
}
