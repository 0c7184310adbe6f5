use crate::features::{Chunk, UtteranceFeatures};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Cuts every utterance into consecutive chunks; the final chunk may be
/// shorter.
pub fn chunk_utterances(utts: &[UtteranceFeatures], chunk_len: usize) -> Vec<Chunk> {
    assert!(chunk_len > 0, "chunk length must be positive");
    let mut out = Vec::new();
    for (i, u) in utts.iter().enumerate() {
        let mut start = 0;
        while start < u.steps {
            let len = chunk_len.min(u.steps - start);
            out.push(Chunk { utt: i, start, len });
            start += len;
        }
    }
    out
}

/// Groups chunks into batches of up to `batch_size`, or shuffles them first
/// when `seed` is given.
pub fn group_chunks(mut chunks: Vec<Chunk>, batch_size: usize, seed: Option<u64>) -> Vec<Vec<Chunk>> {
    assert!(batch_size > 0, "batch size must be positive");
    if let Some(s) = seed {
        chunks.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
    }
    chunks.chunks(batch_size).map(<[Chunk]>::to_vec).collect()
}

/// One epoch of shuffled batches. Each batch is later padded to
/// `chunk_len` steps, with recurrent state starting fresh per chunk.
pub fn make_batches(utts: &[UtteranceFeatures], chunk_len: usize, batch_size: usize, seed: u64) -> Vec<Vec<Chunk>> {
    group_chunks(chunk_utterances(utts, chunk_len), batch_size, Some(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{assemble, FeatureContract, FeatureKind, StreamContract};
    use crate::audio::FeatureSequence;
    use std::collections::BTreeMap;

    fn utt(steps: usize) -> UtteranceFeatures {
        let mut sequences = BTreeMap::new();
        sequences.insert(FeatureKind::Sadjadi, FeatureSequence::new("u", 5, vec![1.0; steps * 5]));
        UtteranceFeatures {
            utt_id: format!("u{steps}"),
            speaker_id: "s".into(),
            steps,
            labels: vec![1; steps],
            sequences,
            rois: None,
        }
    }

    #[test]
    fn chunk_lengths_and_padding() {
        let u = [utt(250)];
        let chunks = chunk_utterances(&u, 100);
        let lens: Vec<usize> = chunks.iter().map(|c| c.len).collect();
        assert_eq!(lens, vec![100, 100, 50]);
        let c = FeatureContract {
            streams: vec![StreamContract::new("a", &[(FeatureKind::Sadjadi, 1)])],
        };
        let b = assemble(&c, &u, &chunks[2..], 100).unwrap();
        assert_eq!(b.mask.iter().filter(|&&m| m == 0.0).count(), 50);
    }

    #[test]
    fn seeds_permute_the_same_multiset() {
        let u: Vec<_> = [250, 120, 330, 90, 410].into_iter().map(utt).collect();
        let a = make_batches(&u, 100, 3, 1);
        let b = make_batches(&u, 100, 3, 2);
        assert_ne!(a, b);
        let flat = |v: Vec<Vec<Chunk>>| {
            let mut f: Vec<Chunk> = v.into_iter().flatten().collect();
            f.sort();
            f
        };
        assert_eq!(flat(a.clone()), flat(b));
        assert_eq!(a, make_batches(&u, 100, 3, 1));
        assert!(a.iter().all(|b| b.len() <= 3));
    }
}
