use super::seed::{derive_seed, stream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: String,
    pub gender: Gender,
    pub f0: f64,
    pub mouth_scale: f64,
    pub articulation_rate: f64,
    pub seed: u64,
}

impl SpeakerProfile {
    /// Alternating genders; everything else drawn from the speaker's seed.
    pub fn generate(corpus_seed: u64, index: usize) -> Self {
        let seed = derive_seed(&[corpus_seed, stream::PROFILE, index as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gender = if index % 2 == 0 { Gender::Female } else { Gender::Male };
        let f0 = match gender {
            Gender::Male => rng.random_range(90.0..150.0),
            Gender::Female => rng.random_range(160.0..220.0),
        };
        SpeakerProfile {
            speaker_id: format!("spk{index:02}"),
            gender,
            f0,
            mouth_scale: rng.random_range(0.8..1.2),
            articulation_rate: rng.random_range(3.0..6.0),
            seed,
        }
    }
}
