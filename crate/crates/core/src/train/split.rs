use crate::corpus::{Gender, UtteranceRecord};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Relative split sizes, by speaker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 70.0,
            test: 25.0,
            validation: 10.0,
        }
    }
}

/// Speaker-disjoint train, test and validation lists, each sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub validation: Vec<String>,
}

/// Test and validation counts round to the nearest speaker (at least one
/// each); train takes the rest. With `balance`, speakers are dealt from
/// alternating per-gender shuffles so every split is within one speaker of
/// even.
pub fn split_speakers(speakers: &[(String, Gender)], ratios: &SplitRatios, balance: bool, seed: u64) -> Result<SplitSpec> {
    let n = speakers.len();
    if n < 3 {
        return Err(Error::Split(format!("{n} speakers; at least 3 are needed")));
    }
    let total = ratios.train + ratios.test + ratios.validation;
    if !(total > 0.0) || ratios.train < 0.0 || ratios.test < 0.0 || ratios.validation < 0.0 {
        return Err(Error::Split("split ratios must be non-negative with a positive sum".into()));
    }
    let mut ids: Vec<&(String, Gender)> = speakers.iter().collect();
    ids.sort_by(|a, b| a.0.cmp(&b.0));
    if ids.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::Split("duplicate speaker id".into()));
    }
    let n_test = ((n as f64 * ratios.test / total).round() as usize).max(1);
    let n_val = ((n as f64 * ratios.validation / total).round() as usize).max(1);
    if n_test + n_val >= n {
        return Err(Error::Split(format!("{n} speakers leave none for training")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<String> = if balance {
        let mut f: Vec<String> = ids.iter().filter(|s| s.1 == Gender::Female).map(|s| s.0.clone()).collect();
        let mut m: Vec<String> = ids.iter().filter(|s| s.1 == Gender::Male).map(|s| s.0.clone()).collect();
        if f.is_empty() || m.is_empty() {
            return Err(Error::Split("gender balance requested but only one gender present".into()));
        }
        f.shuffle(&mut rng);
        m.shuffle(&mut rng);
        let mut out = Vec::with_capacity(n);
        let (mut fi, mut mi) = (f.into_iter(), m.into_iter());
        loop {
            match (fi.next(), mi.next()) {
                (None, None) => break,
                (a, b) => out.extend(a.into_iter().chain(b)),
            }
        }
        out
    } else {
        let mut v: Vec<String> = ids.iter().map(|s| s.0.clone()).collect();
        v.shuffle(&mut rng);
        v
    };
    let sorted = |s: &[String]| {
        let mut v = s.to_vec();
        v.sort();
        v
    };
    Ok(SplitSpec {
        test: sorted(&order[..n_test]),
        validation: sorted(&order[n_test..n_test + n_val]),
        train: sorted(&order[n_test + n_val..]),
    })
}

/// Splits the speakers of a manifest.
pub fn split_corpus(records: &[UtteranceRecord], ratios: &SplitRatios, balance: bool, seed: u64) -> Result<SplitSpec> {
    let mut speakers: BTreeMap<String, Gender> = BTreeMap::new();
    for r in records {
        if let Some(g) = speakers.insert(r.speaker_id.clone(), r.gender) {
            if g != r.gender {
                return Err(Error::Split(format!("speaker {} has conflicting genders", r.speaker_id)));
            }
        }
    }
    let list: Vec<(String, Gender)> = speakers.into_iter().collect();
    split_speakers(&list, ratios, balance, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn roster(n: usize) -> Vec<(String, Gender)> {
        (0..n)
            .map(|i| (format!("spk{i:03}"), if i % 2 == 0 { Gender::Female } else { Gender::Male }))
            .collect()
    }

    fn sizes(s: &SplitSpec) -> (usize, usize, usize) {
        (s.train.len(), s.test.len(), s.validation.len())
    }

    #[test]
    fn proportional_rounding() {
        let r = SplitRatios::default();
        assert_eq!(sizes(&split_speakers(&roster(105), &r, true, 1).unwrap()), (70, 25, 10));
        assert_eq!(sizes(&split_speakers(&roster(21), &r, true, 1).unwrap()), (14, 5, 2));
        assert_eq!(sizes(&split_speakers(&roster(26), &r, true, 1).unwrap()), (18, 6, 2));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let r = SplitRatios::default();
        let a = split_speakers(&roster(26), &r, true, 7).unwrap();
        assert_eq!(a, split_speakers(&roster(26), &r, true, 7).unwrap());
        assert_ne!(a, split_speakers(&roster(26), &r, true, 8).unwrap());
    }

    #[test]
    fn too_few_speakers() {
        let r = SplitRatios::default();
        assert!(matches!(split_speakers(&roster(2), &r, false, 1), Err(Error::Split(_))));
        let one_gender: Vec<_> = (0..6).map(|i| (format!("s{i}"), Gender::Male)).collect();
        assert!(matches!(split_speakers(&one_gender, &r, true, 1), Err(Error::Split(_))));
    }

    proptest! {
        #[test]
        fn disjoint_and_balanced(n in 3usize..80, seed in any::<u64>()) {
            let people = roster(n);
            let s = split_speakers(&people, &SplitRatios::default(), true, seed).unwrap();
            let mut all: Vec<&String> = s.train.iter().chain(&s.test).chain(&s.validation).collect();
            prop_assert_eq!(all.len(), n);
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), n);
            let gender: BTreeMap<&String, Gender> = people.iter().map(|(a, g)| (a, *g)).collect();
            for part in [&s.train, &s.test, &s.validation] {
                let f = part.iter().filter(|id| gender[id] == Gender::Female).count() as i64;
                let m = part.len() as i64 - f;
                prop_assert!((f - m).abs() <= 1, "{} vs {}", f, m);
            }
        }
    }
}
